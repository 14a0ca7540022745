use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use caris_core::geometry::{LaserScan, Pose2D, TwistCommand};
use caris_core::protocol::{
    self, decode_message, encode_message, BridgeMessage, Op, ProtocolError, Topics, ODOM_TYPE, SCAN_TYPE,
    SIM_STEP_TYPE, SPEECH_TYPE, TWIST_TYPE,
};
use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use tokio::sync::{mpsc, oneshot, watch};
use tokio_tungstenite::tungstenite::Message;

use crate::BridgeError;

struct Outgoing {
    frame: String,
    ack: oneshot::Sender<Result<(), BridgeError>>,
}

type Sinks = Arc<Mutex<HashMap<String, Vec<mpsc::UnboundedSender<Value>>>>>;

/// Returned by [`BridgeClient::say`] once the speech message is on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechEvent {
    pub topic: String,
    pub text: String,
}

/// Messages of one topic, decoded lazily in arrival order.
pub struct Subscription<T> {
    rx: mpsc::UnboundedReceiver<Value>,
    decode: fn(&Value) -> Result<T, ProtocolError>,
}

impl<T> Subscription<T> {
    /// `None` once the connection is gone.
    pub async fn recv(&mut self) -> Option<Result<T, ProtocolError>> {
        let v = self.rx.recv().await?;
        Some((self.decode)(&v))
    }
}

/// A rosbridge connection with one reader and one writer task. Publishing is
/// safe from any number of tasks; frames go out in call order.
///
/// The client never reconnects on its own. Once [`BridgeClient::closed`]
/// resolves every call fails with [`BridgeError::Disconnected`].
#[derive(Clone)]
pub struct BridgeClient {
    out: mpsc::UnboundedSender<Outgoing>,
    sinks: Sinks,
    alive: watch::Receiver<bool>,
    topics: Topics,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("connected", &self.is_connected())
            .finish_non_exhaustive()
    }
}

impl BridgeClient {
    pub async fn connect(url: &str, topics: Topics) -> Result<Self, BridgeError> {
        let (ws, _) = tokio_tungstenite::connect_async(url)
            .await
            .map_err(|e| BridgeError::Connect(e.to_string()))?;
        let (mut sink, mut stream) = ws.split();
        let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Outgoing>();
        let (alive_tx, alive_rx) = watch::channel(true);
        let alive_tx = Arc::new(alive_tx);
        let sinks: Sinks = Arc::default();

        let writer_alive = alive_tx.clone();
        let mut writer_dead = alive_rx.clone();
        tokio::spawn(async move {
            loop {
                tokio::select! {
                    next = out_rx.recv() => {
                        let Some(Outgoing { frame, ack }) = next else { break };
                        let sent = sink.send(Message::text(frame)).await;
                        if sent.is_err() {
                            writer_alive.send_replace(false);
                            let _ = ack.send(Err(BridgeError::Disconnected));
                            break;
                        }
                        let _ = ack.send(Ok(()));
                    }
                    _ = wait_dead(&mut writer_dead) => break,
                }
            }
            writer_alive.send_replace(false);
            out_rx.close();
            while let Some(o) = out_rx.recv().await {
                let _ = o.ack.send(Err(BridgeError::Disconnected));
            }
            let _ = sink.close().await;
        });

        let reader_sinks = sinks.clone();
        let reader_alive = alive_tx.clone();
        tokio::spawn(async move {
            while let Some(msg) = stream.next().await {
                let bytes = match msg {
                    Ok(Message::Text(t)) => t.as_bytes().to_vec(),
                    Ok(Message::Binary(b)) => b.to_vec(),
                    Ok(Message::Close(_)) | Err(_) => break,
                    Ok(_) => continue,
                };
                let Ok(m) = decode_message(&bytes) else { continue };
                if m.op != Op::Publish {
                    continue;
                }
                let Some(payload) = m.msg else { continue };
                let mut sinks = reader_sinks.lock().expect("sink table poisoned");
                if let Some(list) = sinks.get_mut(&m.topic) {
                    list.retain(|tx| tx.send(payload.clone()).is_ok());
                }
            }
            reader_alive.send_replace(false);
            // Dropping the senders ends every subscription.
            reader_sinks.lock().expect("sink table poisoned").clear();
        });

        let client = Self {
            out: out_tx,
            sinks,
            alive: alive_rx,
            topics,
        };
        client.send(BridgeMessage::advertise(&client.topics.cmd_vel, TWIST_TYPE)).await?;
        client.send(BridgeMessage::advertise(&client.topics.tts, SPEECH_TYPE)).await?;
        client.send(BridgeMessage::advertise(&client.topics.sim_step, SIM_STEP_TYPE)).await?;
        Ok(client)
    }

    pub fn topics(&self) -> &Topics {
        &self.topics
    }

    pub fn is_connected(&self) -> bool {
        *self.alive.borrow()
    }

    /// Resolves when the connection is lost.
    pub async fn closed(&self) {
        wait_dead(&mut self.alive.clone()).await;
    }

    /// Sends one frame and waits until the writer has handed it to the socket.
    pub async fn send(&self, m: BridgeMessage) -> Result<(), BridgeError> {
        if !self.is_connected() {
            return Err(BridgeError::Disconnected);
        }
        let frame = String::from_utf8(encode_message(&m)?).expect("JSON is UTF-8");
        let (ack, done) = oneshot::channel();
        self.out
            .send(Outgoing { frame, ack })
            .map_err(|_| BridgeError::Disconnected)?;
        done.await.map_err(|_| BridgeError::Disconnected)?
    }

    pub async fn publish(&self, topic: &str, msg: Value) -> Result<(), BridgeError> {
        self.send(BridgeMessage::publish(topic, msg)).await
    }

    pub async fn publish_twist(&self, t: TwistCommand) -> Result<(), BridgeError> {
        self.publish(&self.topics.cmd_vel, protocol::twist_to_msg(t)).await
    }

    pub async fn say(&self, text: &str) -> Result<SpeechEvent, BridgeError> {
        self.publish(&self.topics.tts, protocol::speech_to_msg(text)).await?;
        Ok(SpeechEvent {
            topic: self.topics.tts.clone(),
            text: text.to_string(),
        })
    }

    /// Advances a lockstep simulator by `steps` fixed steps.
    pub async fn step_sim(&self, steps: u32) -> Result<(), BridgeError> {
        self.publish(&self.topics.sim_step, protocol::sim_step_to_msg(steps)).await
    }

    pub async fn subscribe<T>(
        &self,
        topic: &str,
        msg_type: &str,
        decode: fn(&Value) -> Result<T, ProtocolError>,
    ) -> Result<Subscription<T>, BridgeError> {
        let (tx, rx) = mpsc::unbounded_channel();
        let first = {
            let mut sinks = self.sinks.lock().expect("sink table poisoned");
            let list = sinks.entry(topic.to_string()).or_default();
            list.push(tx);
            list.len() == 1
        };
        if first {
            self.send(BridgeMessage::subscribe(topic, msg_type)).await?;
        }
        Ok(Subscription { rx, decode })
    }

    /// Scans with their header stamp in seconds.
    pub async fn subscribe_scan(&self) -> Result<Subscription<(LaserScan, f64)>, BridgeError> {
        let topic = self.topics.scan.clone();
        self.subscribe(&topic, SCAN_TYPE, protocol::scan_from_msg).await
    }

    /// Odometry pose, twist and stamp in seconds.
    pub async fn subscribe_odom(&self) -> Result<Subscription<(Pose2D, TwistCommand, f64)>, BridgeError> {
        let topic = self.topics.odom.clone();
        self.subscribe(&topic, ODOM_TYPE, protocol::odom_from_msg).await
    }
}

async fn wait_dead(alive: &mut watch::Receiver<bool>) {
    let _ = alive.wait_for(|a| !*a).await;
}
