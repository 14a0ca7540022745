//! Core domain logic for CARIS, a context-adaptable Wizard-of-Oz robot platform.
//!
//! Everything in this crate is synchronous or runtime-agnostic and free of
//! network I/O: the rosbridge wire codec, the differential-drive simulator,
//! occupancy mapping, person tracking and re-identification, conversation
//! management and the append-only session recorder. The networked pieces
//! (`caris-bridge`, `caris-gateway`) are thin shells around these modules.

pub mod clock;
pub mod conversation;
pub mod geometry;
pub mod mapping;
pub mod protocol;
pub mod recorder;
pub mod scenario;
pub mod sim;
pub mod tracker;

pub use geometry::{normalize_angle, LaserScan, Pose2D, TwistCommand};
