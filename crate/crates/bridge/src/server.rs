//! The simulated robot as a rosbridge server.
//!
//! A single simulation task owns the [`Simulator`]; connections feed it
//! through a command queue and receive sensor frames from one broadcast, so
//! every client sees the same bytes.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use caris_core::geometry::TwistCommand;
use caris_core::protocol::{self, decode_message, encode_message, BridgeMessage, Op, Topics};
use caris_core::sim::{SimConfig, SimState, Simulator, World};
use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

use crate::BridgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pacing {
    /// The clock only moves when a client publishes on the step topic or
    /// [`SimHandle::step`] is called.
    #[default]
    Lockstep,
    /// One fixed step per `dt` of wall time.
    Realtime,
}

/// A velocity command as it arrived at the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandTap {
    pub received: Instant,
    pub twist: TwistCommand,
}

enum SimCommand {
    Twist(TwistCommand),
    Step(u32, Option<oneshot::Sender<()>>),
}

#[derive(Clone)]
struct Frame {
    topic: Arc<str>,
    text: Arc<str>,
}

struct Shared {
    spoken: Mutex<Vec<String>>,
    state: Mutex<SimState>,
    taps: broadcast::Sender<CommandTap>,
    frames: broadcast::Sender<Frame>,
    topics: Topics,
}

/// Inspection and control of a running simulator.
#[derive(Clone)]
pub struct SimHandle {
    shared: Arc<Shared>,
    commands: mpsc::UnboundedSender<SimCommand>,
}

impl SimHandle {
    /// Everything received on the speech topic, in order.
    pub fn spoken(&self) -> Vec<String> {
        self.shared.spoken.lock().expect("spoken log poisoned").clone()
    }

    /// Ground-truth state after the latest step.
    pub fn state(&self) -> SimState {
        self.shared.state.lock().expect("state poisoned").clone()
    }

    /// Stream of velocity commands stamped on arrival.
    pub fn command_taps(&self) -> broadcast::Receiver<CommandTap> {
        self.shared.taps.subscribe()
    }

    /// Runs `steps` fixed steps and returns once their frames are broadcast.
    pub async fn step(&self, steps: u32) {
        let (tx, rx) = oneshot::channel();
        if self.commands.send(SimCommand::Step(steps, Some(tx))).is_ok() {
            let _ = rx.await;
        }
    }

    pub fn set_command(&self, twist: TwistCommand) {
        let _ = self.commands.send(SimCommand::Twist(twist));
    }
}

pub struct SimServer {
    addr: SocketAddr,
    handle: SimHandle,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl SimServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    pub fn handle(&self) -> SimHandle {
        self.handle.clone()
    }

    /// Closes every connection and stops the simulation.
    pub fn shutdown(&self) {
        self.shutdown.send_replace(true);
        for t in &self.tasks {
            t.abort();
        }
    }

    /// Resolves when the server stops (normally never, outside tests).
    pub async fn join(mut self) {
        for t in self.tasks.drain(..) {
            let _ = t.await;
        }
    }
}

impl Drop for SimServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub async fn serve(world: World, config: SimConfig, addr: SocketAddr, pacing: Pacing) -> Result<SimServer, BridgeError> {
    world.validate().map_err(|e| BridgeError::Bind(format!("invalid world: {e}")))?;
    let listener = TcpListener::bind(addr).await.map_err(|e| BridgeError::Bind(format!("{addr}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| BridgeError::Bind(e.to_string()))?;

    let sim = Simulator::new(world, config);
    let shared = Arc::new(Shared {
        spoken: Mutex::new(Vec::new()),
        state: Mutex::new(sim.state().clone()),
        taps: broadcast::channel(1024).0,
        frames: broadcast::channel(4096).0,
        topics: Topics::default(),
    });
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (shutdown, shutdown_rx) = watch::channel(false);
    let handle = SimHandle {
        shared: shared.clone(),
        commands: cmd_tx.clone(),
    };

    let sim_task = tokio::spawn(run_sim(sim, shared.clone(), cmd_rx, pacing));
    let accept_task = tokio::spawn(async move {
        loop {
            let Ok((stream, _)) = listener.accept().await else { continue };
            let _ = stream.set_nodelay(true);
            tokio::spawn(serve_connection(stream, shared.clone(), cmd_tx.clone(), shutdown_rx.clone()));
        }
    });

    Ok(SimServer {
        addr,
        handle,
        shutdown,
        tasks: vec![sim_task, accept_task],
    })
}

async fn run_sim(
    mut sim: Simulator,
    shared: Arc<Shared>,
    mut commands: mpsc::UnboundedReceiver<SimCommand>,
    pacing: Pacing,
) {
    let dt = sim.config().dt;
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(dt));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let realtime = pacing == Pacing::Realtime;
    loop {
        tokio::select! {
            biased;
            cmd = commands.recv() => match cmd {
                None => break,
                Some(SimCommand::Twist(t)) => sim.set_command(t),
                Some(SimCommand::Step(n, done)) => {
                    for _ in 0..n {
                        tick(&mut sim, &shared);
                    }
                    if let Some(done) = done {
                        let _ = done.send(());
                    }
                }
            },
            _ = ticker.tick(), if realtime => tick(&mut sim, &shared),
        }
    }
}

fn tick(sim: &mut Simulator, shared: &Shared) {
    let out = sim.tick();
    *shared.state.lock().expect("state poisoned") = sim.state().clone();
    let emit = |topic: &str, msg| {
        let frame = encode_message(&BridgeMessage::publish(topic, msg)).expect("sensor frames are valid");
        let _ = shared.frames.send(Frame {
            topic: topic.into(),
            text: String::from_utf8(frame).expect("JSON is UTF-8").into(),
        });
    };
    if let Some((pose, twist)) = out.odom {
        emit(&shared.topics.odom, protocol::odom_to_msg(pose, twist, out.clock));
    }
    if let Some(scan) = out.scan {
        emit(&shared.topics.scan, protocol::scan_to_msg(&scan, out.clock, "base_laser"));
    }
}

async fn serve_connection(
    stream: TcpStream,
    shared: Arc<Shared>,
    commands: mpsc::UnboundedSender<SimCommand>,
    mut shutdown: watch::Receiver<bool>,
) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else { return };
    let (mut sink, mut source) = ws.split();
    let mut frames = shared.frames.subscribe();
    let mut subscribed: HashSet<String> = HashSet::new();
    loop {
        tokio::select! {
            incoming = source.next() => {
                let received = Instant::now();
                let bytes = match incoming {
                    Some(Ok(Message::Text(t))) => t.as_bytes().to_vec(),
                    Some(Ok(Message::Binary(b))) => b.to_vec(),
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => continue,
                };
                let Ok(m) = decode_message(&bytes) else { continue };
                match m.op {
                    Op::Subscribe => { subscribed.insert(m.topic); }
                    Op::Unsubscribe => { subscribed.remove(&m.topic); }
                    Op::Advertise | Op::Unadvertise => {}
                    Op::Publish => handle_publish(&m, received, &shared, &commands),
                }
            }
            frame = frames.recv() => match frame {
                Ok(f) => {
                    if subscribed.contains(&*f.topic) && sink.send(Message::text(f.text.to_string())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            _ = wait_until(&mut shutdown, true) => break,
        }
    }
    let _ = sink.close().await;
}

fn handle_publish(m: &BridgeMessage, received: Instant, shared: &Shared, commands: &mpsc::UnboundedSender<SimCommand>) {
    let Some(msg) = &m.msg else { return };
    let topics = &shared.topics;
    if m.topic == topics.cmd_vel {
        if let Ok(twist) = protocol::twist_from_msg(msg) {
            // queued first, so a tap observer can rely on the command being pending
            let _ = commands.send(SimCommand::Twist(twist));
            let _ = shared.taps.send(CommandTap { received, twist });
        }
    } else if m.topic == topics.tts {
        if let Ok(text) = protocol::speech_from_msg(msg) {
            shared.spoken.lock().expect("spoken log poisoned").push(text);
        }
    } else if m.topic == topics.sim_step {
        if let Ok(n) = protocol::sim_step_from_msg(msg) {
            let _ = commands.send(SimCommand::Step(n, None));
        }
    }
}

async fn wait_until(rx: &mut watch::Receiver<bool>, value: bool) {
    let _ = rx.wait_for(|v| *v == value).await;
}
