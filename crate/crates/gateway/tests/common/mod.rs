#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use caris_bridge::{serve, Pacing, SimHandle, SimServer};
use caris_core::recorder::{replay, SessionEvent};
use caris_core::scenario::ScenarioConfig;
use caris_core::sim::{SimConfig, World};
use caris_core::tracker::synthetic::basis_embedding;
use caris_core::tracker::{BBox, Detection, DetectionBatch};
use caris_gateway::{start, GatewayConfig, RunningGateway};
use reqwest::StatusCode;
use serde_json::Value;
use tempfile::TempDir;

pub fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(repo_file(&format!("scenarios/{name}.json"))).unwrap()
}

pub fn room() -> World {
    World::load(&repo_file("worlds/room_4x4.json")).unwrap()
}

pub struct Rig {
    pub sim: SimServer,
    pub gw: RunningGateway,
    pub http: reqwest::Client,
    pub storage: TempDir,
}

impl Rig {
    /// Lockstep rig whose sensor streams are already flowing.
    pub async fn start(scenario_name: &str) -> Rig {
        let rig = Self::start_with(scenario_name, Pacing::Lockstep, |_| {}).await;
        rig.warm_up().await;
        rig
    }

    /// Steps the sim until the gateway has integrated a scan.
    pub async fn warm_up(&self) {
        let started = Instant::now();
        while self.gw.gateway.robot.map_version() == 0 {
            assert!(started.elapsed() < Duration::from_secs(5), "no scan reached the gateway");
            self.sim().step(2).await;
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }

    pub async fn start_with(scenario_name: &str, pacing: Pacing, tweak: impl FnOnce(&mut GatewayConfig)) -> Rig {
        let sim = serve(room(), SimConfig::default(), "127.0.0.1:0".parse().unwrap(), pacing)
            .await
            .unwrap();
        let storage = tempfile::tempdir().unwrap();
        let mut config = GatewayConfig::new(
            &sim.url(),
            scenario(scenario_name),
            storage.path().to_path_buf(),
            "127.0.0.1:0".parse().unwrap(),
        );
        config.mock_providers = true;
        config.reconnect_delay = Duration::from_millis(50);
        tweak(&mut config);
        let gw = start(config).await.unwrap();
        let rig = Rig {
            sim,
            gw,
            http: reqwest::Client::new(),
            storage,
        };
        let g = rig.gw.gateway.clone();
        wait_for(Duration::from_secs(5), || g.robot.is_connected()).await;
        rig
    }

    pub fn sim(&self) -> SimHandle {
        self.sim.handle()
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.gw.url())
    }

    pub async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(self.url(path)).json(&body).send().await.unwrap();
        split(r).await
    }

    pub async fn post_raw(&self, path: &str, body: Vec<u8>) -> (StatusCode, Value) {
        let r = self.http.post(self.url(path)).body(body).send().await.unwrap();
        split(r).await
    }

    pub async fn put(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.put(self.url(path)).json(&body).send().await.unwrap();
        split(r).await
    }

    pub async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(self.url(path)).send().await.unwrap();
        split(r).await
    }

    pub fn events(&self) -> Vec<SessionEvent> {
        replay(self.gw.gateway.session.dir()).unwrap()
    }

    /// Sends the same lone detection for `frames` consecutive frames.
    pub async fn detect_one(&self, frames: std::ops::Range<u64>) -> Value {
        let mut last = Value::Null;
        for f in frames {
            let (status, body) = self.post("/detections", serde_json::to_value(single(f, 0)).unwrap()).await;
            assert_eq!(status, StatusCode::OK, "{body}");
            last = body;
        }
        last
    }
}

pub async fn split(r: reqwest::Response) -> (StatusCode, Value) {
    let status = r.status();
    let bytes = r.bytes().await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

/// One person standing still at the image center.
pub fn single(frame_id: u64, who: usize) -> DetectionBatch {
    DetectionBatch {
        frame_id,
        detections: vec![Detection {
            bbox: BBox::new(320.0 + 150.0 * who as f64, 240.0, 80.0, 200.0),
            confidence: 0.9,
            embedding: basis_embedding(128, who),
        }],
    }
}

pub async fn wait_for(limit: Duration, mut cond: impl FnMut() -> bool) {
    let started = Instant::now();
    while !cond() {
        assert!(started.elapsed() < limit, "condition not met within {limit:?}");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}
