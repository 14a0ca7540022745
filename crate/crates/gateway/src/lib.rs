//! The wizard's command center: one HTTP/WebSocket surface over the robot
//! link, tracker, conversation and session recorder.

pub mod clock;
pub mod error;
pub mod providers;
pub mod robot;
pub mod routes;
pub mod video;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use caris_core::clock::{Clock, MonotonicClock};
use caris_core::conversation::{Conversation, ConversationConfig, LlmProvider, MockProvider, MockTranscriber};
use caris_core::protocol::Topics;
use caris_core::recorder::{start_session, RecorderError, Session};
use caris_core::scenario::ScenarioConfig;
use caris_core::tracker::{BBox, PersonId, TrackView, Tracker, TrackerParams};
use caris_core::Pose2D;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;

use clock::{RobotTime, SessionClock};
use robot::{MapConfig, RobotLink, RobotSpeech};

pub use error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    /// Session time follows the robot's stamps.
    #[default]
    Robot,
    Wall,
}

#[derive(Clone)]
pub struct GatewayConfig {
    pub robot_url: String,
    pub scenario: ScenarioConfig,
    pub storage: PathBuf,
    pub listen: SocketAddr,
    pub clock: ClockMode,
    /// Serve every configured provider with the deterministic mock.
    pub mock_providers: bool,
    /// Backends that replace the provider of the same name.
    pub provider_overrides: HashMap<String, Arc<dyn LlmProvider>>,
    pub tracker: TrackerParams,
    pub map: MapConfig,
    pub topics: Topics,
    pub state_rate_hz: f64,
    pub video_rate_hz: f64,
    pub reconnect_delay: Duration,
    pub llm_timeout: Duration,
}

impl GatewayConfig {
    pub fn new(robot_url: &str, scenario: ScenarioConfig, storage: PathBuf, listen: SocketAddr) -> Self {
        Self {
            robot_url: robot_url.to_string(),
            scenario,
            storage,
            listen,
            clock: ClockMode::Robot,
            mock_providers: false,
            provider_overrides: HashMap::new(),
            tracker: TrackerParams::default(),
            map: MapConfig::default(),
            topics: Topics::default(),
            state_rate_hz: 20.0,
            video_rate_hz: 10.0,
            reconnect_delay: Duration::from_millis(500),
            llm_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("could not bind {0}: {1}")]
    Bind(SocketAddr, String),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub track_id: u64,
    pub person_id: Option<PersonId>,
    pub label: String,
    pub bbox: BBox,
}

/// Everything the console renders, sampled at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub seq: u64,
    pub timestamp: u64,
    pub pose: Pose2D,
    pub tracks: Vec<TrackState>,
    pub map_version: u64,
    pub last_utterance: Option<String>,
    pub active_scenario: String,
    pub robot_connected: bool,
}

pub struct CameraFrame {
    pub frame_id: Option<u64>,
    pub image: RgbImage,
}

/// Shared state behind every handler.
pub struct Gateway {
    pub config: GatewayConfig,
    pub session: Arc<Session>,
    pub conversation: Arc<Conversation>,
    pub robot: Arc<RobotLink>,
    pub clock: Arc<SessionClock>,
    pub http: reqwest::Client,
    tracker: tokio::sync::Mutex<Tracker>,
    /// Confirmed tracks as of the last tracker change.
    views: RwLock<Vec<TrackView>>,
    /// (person, seq) pairs recorded but not yet applied to the registry.
    pending_history: Mutex<mpsc::UnboundedReceiver<(PersonId, u64)>>,
    camera: RwLock<Option<CameraFrame>>,
    last_utterance: RwLock<Option<String>>,
    state_tx: watch::Sender<StateFrame>,
}

impl Gateway {
    pub fn scenario(&self) -> ScenarioConfig {
        self.session.scenario()
    }

    pub fn views(&self) -> Vec<TrackView> {
        self.views.read().expect("views poisoned").clone()
    }

    pub fn state_frames(&self) -> watch::Receiver<StateFrame> {
        self.state_tx.subscribe()
    }

    pub fn set_utterance(&self, text: &str) {
        *self.last_utterance.write().expect("utterance poisoned") = Some(text.to_string());
    }

    /// Locks the tracker with every recorded person reference applied.
    pub async fn tracker(&self) -> tokio::sync::MutexGuard<'_, Tracker> {
        let mut t = self.tracker.lock().await;
        let mut rx = self.pending_history.lock().expect("history queue poisoned");
        while let Ok((person, seq)) = rx.try_recv() {
            // events may name persons that were never created; those carry no history
            let _ = t.registry_mut().record_event(person, seq);
        }
        t
    }

    pub fn refresh_views(&self, tracker: &Tracker) {
        *self.views.write().expect("views poisoned") = tracker.snapshot();
    }

    pub fn set_views(&self, views: Vec<TrackView>) {
        *self.views.write().expect("views poisoned") = views;
    }

    pub fn persist_registry(&self, tracker: &Tracker) {
        let _ = tracker.registry().save(&self.session.dir().join("persons.json"));
    }

    pub fn set_camera(&self, frame: CameraFrame) -> Result<(), ApiError> {
        let mut cam = self.camera.write().expect("camera poisoned");
        if let (Some(prev), Some(id)) = (cam.as_ref().and_then(|c| c.frame_id), frame.frame_id) {
            if id <= prev {
                return Err(ApiError::Conflict(format!("frame {id} does not follow frame {prev}")));
            }
        }
        *cam = Some(frame);
        Ok(())
    }

    pub fn camera_image(&self) -> Option<RgbImage> {
        self.camera.read().expect("camera poisoned").as_ref().map(|c| c.image.clone())
    }

    pub fn build_state(&self, seq: u64) -> StateFrame {
        StateFrame {
            seq,
            timestamp: self.clock.now_ms(),
            pose: self.robot.pose(),
            tracks: self
                .views()
                .into_iter()
                .map(|v| TrackState {
                    track_id: v.track_id,
                    person_id: v.person_id,
                    label: v.label,
                    bbox: v.bbox,
                })
                .collect(),
            map_version: self.robot.map_version(),
            last_utterance: self.last_utterance.read().expect("utterance poisoned").clone(),
            active_scenario: self.scenario().name,
            robot_connected: self.robot.is_connected(),
        }
    }

    /// Points the conversation at a scenario's providers, features and role.
    pub fn configure_conversation(&self, scenario: &ScenarioConfig) {
        let c = &self.conversation;
        c.clear_providers();
        for spec in &scenario.providers {
            let backend = match self.config.provider_overrides.get(&spec.name) {
                Some(b) => b.clone(),
                None if self.config.mock_providers => Arc::new(MockProvider::new()),
                None => providers::build_provider(spec, &self.http),
            };
            c.register_provider(spec.clone(), backend);
        }
        let _ = c.set_active_provider(&scenario.provider);
        c.set_features(scenario.enabled_features);
        c.replace_role(&scenario.default_role);
    }
}

/// A started gateway; dropping it stops every background task.
pub struct RunningGateway {
    pub addr: SocketAddr,
    pub gateway: Arc<Gateway>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningGateway {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(&self) {
        for t in &self.tasks {
            t.abort();
        }
        let _ = self.gateway.session.close();
    }

    pub async fn join(mut self) {
        if let Some(server) = self.tasks.pop() {
            let _ = server.await;
        }
    }
}

impl Drop for RunningGateway {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub async fn start(config: GatewayConfig) -> Result<RunningGateway, GatewayError> {
    config
        .scenario
        .validate()
        .map_err(|e| GatewayError::Scenario(e.to_string()))?;
    let clock = Arc::new(match config.clock {
        ClockMode::Robot => SessionClock::Virtual(RobotTime::default()),
        ClockMode::Wall => SessionClock::Wall(MonotonicClock::new()),
    });
    let session = Arc::new(start_session(&config.storage, &config.scenario, clock.clone())?);
    let (history_tx, history_rx) = mpsc::unbounded_channel();
    session.set_observer(move |e| {
        for p in e.persons() {
            let _ = history_tx.send((p, e.seq));
        }
    });

    let conversation = Arc::new(Conversation::new(
        ConversationConfig {
            history_window: config.scenario.history_window,
            timeout: config.llm_timeout,
            ..ConversationConfig::default()
        },
        clock.clone(),
        session.clone(),
    ));
    let robot = Arc::new(RobotLink::new(&config.robot_url, config.topics.clone(), config.map, clock.clone()));
    conversation.set_speaker(Some(Arc::new(RobotSpeech(robot.clone()))));
    conversation.set_transcriber(Some(Arc::new(MockTranscriber)));

    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|e| GatewayError::Bind(config.listen, e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| GatewayError::Bind(config.listen, e.to_string()))?;

    let (state_tx, _) = watch::channel(StateFrame {
        seq: 0,
        timestamp: 0,
        pose: Pose2D::default(),
        tracks: Vec::new(),
        map_version: 0,
        last_utterance: None,
        active_scenario: config.scenario.name.clone(),
        robot_connected: false,
    });
    let gateway = Arc::new(Gateway {
        tracker: tokio::sync::Mutex::new(Tracker::new(config.tracker)),
        http: reqwest::Client::new(),
        config,
        session,
        conversation,
        robot: robot.clone(),
        clock,
        views: RwLock::new(Vec::new()),
        pending_history: Mutex::new(history_rx),
        camera: RwLock::new(None),
        last_utterance: RwLock::new(None),
        state_tx,
    });
    gateway.configure_conversation(&gateway.config.scenario.clone());

    let mut tasks = Vec::new();
    tasks.push(tokio::spawn(robot.run(gateway.config.reconnect_delay)));
    let g = gateway.clone();
    tasks.push(tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / g.config.state_rate_hz));
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        let mut seq = 0;
        loop {
            tick.tick().await;
            seq += 1;
            g.state_tx.send_replace(g.build_state(seq));
        }
    }));
    let app = routes::router(gateway.clone());
    tasks.push(tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    }));
    Ok(RunningGateway { addr, gateway, tasks })
}
