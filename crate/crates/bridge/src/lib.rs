//! rosbridge v2 WebSocket plumbing: a client for talking to a robot and a
//! simulated robot that serves the same protocol.

pub mod client;
pub mod server;

use caris_core::protocol::ProtocolError;
use thiserror::Error;

pub use client::{BridgeClient, SpeechEvent, Subscription};
pub use server::{serve, CommandTap, Pacing, SimHandle, SimServer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BridgeError {
    #[error("not connected to the robot")]
    Disconnected,
    #[error("could not connect: {0}")]
    Connect(String),
    #[error("could not bind: {0}")]
    Bind(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}
