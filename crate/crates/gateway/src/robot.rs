//! Connection to the robot. The bridge never retries on its own; this loop
//! reconnects after a delay and feeds odometry and scans into the map.

use std::sync::{Arc, RwLock};
use std::time::Duration;

use async_trait::async_trait;
use caris_bridge::{BridgeClient, BridgeError, Subscription};
use caris_core::conversation::{SpeechSink, VoiceError};
use caris_core::mapping::{GridParams, OccupancyGrid, PoseEstimator};
use caris_core::protocol::Topics;
use caris_core::{Pose2D, TwistCommand};

use crate::clock::SessionClock;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapConfig {
    /// Side length of the square map in meters, centered on the first pose.
    pub size: f64,
    pub resolution: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            size: 20.0,
            resolution: 0.05,
        }
    }
}

pub struct MapState {
    pub grid: Option<OccupancyGrid>,
    pub version: u64,
}

pub struct RobotLink {
    url: String,
    topics: Topics,
    client: RwLock<Option<BridgeClient>>,
    pose: RwLock<PoseEstimator>,
    map: RwLock<MapState>,
    map_config: MapConfig,
    clock: Arc<SessionClock>,
}

impl RobotLink {
    pub fn new(url: &str, topics: Topics, map_config: MapConfig, clock: Arc<SessionClock>) -> Self {
        Self {
            url: url.to_string(),
            topics,
            client: RwLock::new(None),
            pose: RwLock::new(PoseEstimator::new(Pose2D::default())),
            map: RwLock::new(MapState { grid: None, version: 0 }),
            map_config,
            clock,
        }
    }

    pub fn client(&self) -> Option<BridgeClient> {
        self.client
            .read()
            .expect("client slot poisoned")
            .clone()
            .filter(BridgeClient::is_connected)
    }

    pub fn is_connected(&self) -> bool {
        self.client().is_some()
    }

    pub fn pose(&self) -> Pose2D {
        self.pose.read().expect("pose poisoned").pose()
    }

    pub fn map_version(&self) -> u64 {
        self.map.read().expect("map poisoned").version
    }

    pub fn with_map<R>(&self, f: impl FnOnce(&MapState) -> R) -> R {
        f(&self.map.read().expect("map poisoned"))
    }

    pub async fn publish_twist(&self, t: TwistCommand) -> Result<(), BridgeError> {
        let client = self.client().ok_or(BridgeError::Disconnected)?;
        client.publish_twist(t).await?;
        self.pose.write().expect("pose poisoned").on_command(t);
        Ok(())
    }

    pub async fn say(&self, text: &str) -> Result<(), BridgeError> {
        self.client().ok_or(BridgeError::Disconnected)?.say(text).await.map(|_| ())
    }

    /// Connects, consumes sensor streams until the link drops, waits and
    /// tries again. Runs until the task is aborted.
    pub async fn run(self: Arc<Self>, retry: Duration) {
        loop {
            if let Ok(client) = BridgeClient::connect(&self.url, self.topics.clone()).await {
                // subscribe before reporting the link as up
                if let (Ok(odom), Ok(scans)) = (client.subscribe_odom().await, client.subscribe_scan().await) {
                    *self.client.write().expect("client slot poisoned") = Some(client.clone());
                    self.consume(&client, odom, scans).await;
                    *self.client.write().expect("client slot poisoned") = None;
                }
            }
            tokio::time::sleep(retry).await;
        }
    }

    async fn consume(
        &self,
        client: &BridgeClient,
        mut odom: Subscription<(Pose2D, TwistCommand, f64)>,
        mut scans: Subscription<(caris_core::LaserScan, f64)>,
    ) {
        loop {
            tokio::select! {
                m = odom.recv() => match m {
                    None => break,
                    Some(Ok((pose, _, stamp))) => {
                        self.clock.observe_stamp(stamp);
                        self.pose.write().expect("pose poisoned").on_odometry(pose);
                    }
                    Some(Err(_)) => {}
                },
                m = scans.recv() => match m {
                    None => break,
                    Some(Ok((scan, stamp))) => {
                        self.clock.observe_stamp(stamp);
                        self.integrate_scan(&scan);
                    }
                    Some(Err(_)) => {}
                },
                _ = client.closed() => break,
            }
        }
    }

    fn integrate_scan(&self, scan: &caris_core::LaserScan) {
        let pose = self.pose();
        let mut map = self.map.write().expect("map poisoned");
        let cfg = self.map_config;
        let grid = map.grid.get_or_insert_with(|| {
            let cells = (cfg.size / cfg.resolution).round() as usize;
            let half = cfg.size / 2.0;
            OccupancyGrid::new(
                cfg.resolution,
                Pose2D::new(pose.x - half, pose.y - half, 0.0),
                cells,
                cells,
                GridParams::default(),
            )
        });
        if grid.update(&pose, scan).is_ok() {
            map.version += 1;
        }
    }
}

/// Speech output through the robot's speech topic.
pub struct RobotSpeech(pub Arc<RobotLink>);

#[async_trait]
impl SpeechSink for RobotSpeech {
    async fn say(&self, text: &str) -> Result<(), VoiceError> {
        self.0
            .say(text)
            .await
            .map_err(|e| VoiceError::AdapterUnavailable(e.to_string()))
    }
}
