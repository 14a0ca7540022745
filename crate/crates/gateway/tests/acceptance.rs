//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

mod common;
#[path = "../../core/tests/support/golden.rs"]
mod golden;
#[path = "../../core/tests/support/identity.rs"]
mod identity;
#[path = "../../core/tests/support/room_map.rs"]
mod room_map;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use caris_bridge::Pacing;
use caris_core::conversation::voice::fixture_audio;
use caris_core::conversation::{LlmProvider, MockProvider};
use caris_core::mapping::integrate_odometry;
use caris_core::protocol::{decode_message, encode_message, BridgeMessage};
use caris_core::recorder::{replay, serialize_events, EventKind};
use caris_core::sim::{self, World};
use caris_core::tracker::synthetic::SyntheticDetector;
use caris_core::tracker::{hungarian, KalmanParams, TrackerParams};
use caris_core::{normalize_angle, Pose2D, TwistCommand};
use common::{single, wait_for, Rig};
use image::{Rgb, RgbImage};
use nalgebra::{DMatrix, SymmetricEigen, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::StatusCode;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn camera_jpeg() -> Vec<u8> {
    caris_gateway::video::encode_jpeg(&RgbImage::from_pixel(640, 480, Rgb([90, 90, 90])))
}

async fn expect_ok(r: (StatusCode, Value), what: &str) -> Result<Value, String> {
    let (status, body) = r;
    check(status.is_success(), format!("{what}: {status} {body}"))?;
    Ok(body)
}

/// Scripted wizard session covering every platform capability, judged from
/// the recorded session alone.
async fn feature_checklist() -> Outcome {
    let started = Instant::now();
    let rig = Rig::start("tour_guide").await;
    let sim = rig.sim();
    let spawn = rig.gw.gateway.robot.pose();

    // teleoperation: hold forward for 1 s of sim time
    let mut taps = sim.command_taps();
    for _ in 0..10 {
        expect_ok(rig.post("/teleop", json!({"command": "forward", "scale": 1.0})).await, "teleop").await?;
        taps.recv().await.map_err(|e| e.to_string())?;
        sim.step(2).await;
    }
    expect_ok(rig.post("/teleop", json!({"command": "stop", "note": "arrived at exhibit"})).await, "stop").await?;
    taps.recv().await.map_err(|e| e.to_string())?;
    sim.step(2).await;
    let g = rig.gw.gateway.clone();
    wait_for(Duration::from_secs(5), || g.robot.pose().x > spawn.x + 0.29).await;
    let moved = g.robot.pose().x - spawn.x;

    // perception: camera frames and detections
    for f in 0..4u64 {
        expect_ok(rig.post_raw(&format!("/frames?frame_id={f}"), camera_jpeg()).await, "frame").await?;
        expect_ok(rig.post("/detections", serde_json::to_value(single(f, 0)).unwrap()).await, "detections").await?;
    }
    expect_ok(rig.post("/persons/1/rename", json!({"label": "Visitor", "note": "school group"})).await, "rename").await?;

    // video streaming
    let mut video = rig.http.get(rig.url("/video")).send().await.map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    while buf.len() < 4096 {
        buf.extend_from_slice(&video.chunk().await.map_err(|e| e.to_string())?.ok_or("video stream ended")?);
    }
    drop(video);
    let head = String::from_utf8_lossy(&buf[..200]).to_string();
    check(head.contains("--carisframe") && head.contains("X-Caris-Overlays: 1"), format!("video part head {head:?}"))?;

    // speech input (mock STT), typed input, LLM, speech output, photo, notes
    let heard = expect_ok(
        rig.post_raw("/transcribe?person_id=1", fixture_audio("Can you tell me about this robot?")).await,
        "transcribe",
    )
    .await?;
    let typed = expect_ok(
        rig.post(
            "/llm/complete",
            json!({"prompt": format!("Visitor asked: {}", heard["text"].as_str().unwrap_or("")), "provider": "llava-7b", "attach_frame": true, "person_id": 1, "note": "typed follow-up"}),
        )
        .await,
        "llm",
    )
    .await?;
    let reply = typed["response"].as_str().unwrap_or("").to_string();
    expect_ok(rig.post("/speak", json!({"text": reply, "person_id": 1})).await, "speak").await?;
    expect_ok(rig.post("/snapshot", json!({"person_id": 1, "note": "group photo"})).await, "snapshot").await?;
    let map = rig.http.get(rig.url("/map.png")).send().await.map_err(|e| e.to_string())?;
    check(map.status() == StatusCode::OK, "map not available")?;
    let sim_spoken = sim.spoken();

    let dir = rig.gw.gateway.session.dir().to_path_buf();
    rig.gw.shutdown();
    let events = replay(&dir).map_err(|e| e.to_string())?;
    let has = |k: EventKind| events.iter().any(|e| e.kind == k);
    let notes = events.iter().filter(|e| e.note.is_some()).count();
    check(has(EventKind::Stt), "no speech input event")?;
    check(
        events.iter().any(|e| e.kind == EventKind::Llm && e.payload["ok"] == json!(true)),
        "no successful llm exchange",
    )?;
    check(has(EventKind::Teleop), "no teleop events")?;
    check((moved - 0.3).abs() < 1e-9, format!("robot moved {moved:.3} m"))?;
    check(has(EventKind::Tts) && sim_spoken.contains(&reply), "speech not delivered")?;
    check(has(EventKind::Snapshot) && dir.join("snapshots").read_dir().map(|d| d.count()).unwrap_or(0) == 1, "no stored photo")?;
    check(
        events
            .iter()
            .any(|e| e.kind == EventKind::Track && e.payload["confirmed"].as_array().is_some_and(|c| !c.is_empty())),
        "no confirmed track",
    )?;
    check(notes >= 4, format!("only {notes} annotated events"))?;
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} events, moved {moved:.3} m, {notes} notes, {:.1} s",
        events.len(),
        elapsed.as_secs_f64()
    ))
}

fn brute_force(cost: &DMatrix<f64>) -> f64 {
    let (n, m) = cost.shape();
    let transposed = n > m;
    let (rows, cols) = if transposed { (m, n) } else { (n, m) };
    let at = |r: usize, c: usize| if transposed { cost[(c, r)] } else { cost[(r, c)] };
    let mut best = f64::INFINITY;
    let mut stack = vec![(0usize, 0u32, 0.0f64)];
    while let Some((r, used, acc)) = stack.pop() {
        if r == rows {
            best = best.min(acc);
            continue;
        }
        for c in 0..cols {
            if used & (1 << c) == 0 {
                stack.push((r + 1, used | (1 << c), acc + at(r, c)));
            }
        }
    }
    best
}

fn assignment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let (n, m) = (rng.random_range(1..=6), rng.random_range(1..=6));
        // integer costs keep every partial sum exact
        let cost = DMatrix::from_fn(n, m, |_, _| rng.random_range(0..1000) as f64);
        let got = hungarian(&cost).map_err(|e| e.to_string())?.total_cost;
        let want = brute_force(&cost);
        check(got == want, format!("matrix {i} ({n}x{m}): {got} != {want}"))?;
    }
    Ok("1000 matrices, exact".into())
}

fn tracker_identity() -> Outcome {
    let params = TrackerParams::default();
    let crossing = identity::run(&SyntheticDetector::crossing(40, params.embedding_dim), 0..40);
    check(crossing.switches == 0, format!("{} switches while crossing", crossing.switches))?;
    check(crossing.persons.len() == 2, "both people tracked")?;
    let away = params.max_age as u64 + 10;
    let back = identity::run(&SyntheticDetector::leave_and_return(params.embedding_dim, away), 0..40 + away);
    let ids = &back.persons[&0];
    check(ids.iter().all(|&p| p == ids[0]), format!("ids after return {ids:?}"))?;
    check(back.reidentified == 1, format!("{} re-identifications", back.reidentified))?;
    Ok(format!("0 switches over 40 frames; person {} re-linked after {away} frames away", ids[0]))
}

fn filter_sanity() -> Outcome {
    let kf = KalmanParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = kf.initiate(&Vector4::new(320.0, 240.0, 0.5, 180.0));
    let mut worst = f64::INFINITY;
    for step in 0..1000 {
        g = kf.predict(&g, rng.random_range(0.5..2.0));
        if rng.random_bool(0.7) {
            let z = Vector4::new(
                g.mean[0] + rng.random_range(-15.0..15.0),
                g.mean[1] + rng.random_range(-15.0..15.0),
                rng.random_range(0.3..0.7),
                rng.random_range(100.0..260.0),
            );
            g = kf.update(&g, &z).map_err(|e| e.to_string())?;
        }
        let p = g.covariance;
        let asym = (p - p.transpose()).abs().max();
        check(asym <= 1e-9 * p.abs().max().max(1.0), format!("step {step}: asymmetry {asym}"))?;
        let min = SymmetricEigen::new(p).eigenvalues.min();
        worst = worst.min(min);
        check(min >= -1e-9, format!("step {step}: min eigenvalue {min}"))?;
    }
    let (z, _) = kf.project(&g);
    let after = kf.update(&g, &z).map_err(|e| e.to_string())?;
    let shift = (0..4).map(|i| (after.mean[i] - g.mean[i]).abs()).fold(0.0, f64::max);
    check(shift <= 1e-9, format!("zero innovation moved the mean by {shift}"))?;
    Ok(format!("min eigenvalue {worst:.3e}, zero-innovation shift {shift:.1e}"))
}

fn mapping_fidelity() -> Outcome {
    let f = room_map::traverse_room(50);
    check(f.scans == 50, "scan count")?;
    check(f.wall_occupied >= 0.95, format!("walls {:.3}", f.wall_occupied))?;
    check(f.interior_free >= 0.95, format!("interior {:.3}", f.interior_free))?;
    check(f.elapsed < Duration::from_secs(10), format!("took {:?}", f.elapsed))?;
    Ok(format!(
        "walls {:.1}% of {}, interior {:.1}% of {}, {:?}",
        100.0 * f.wall_occupied,
        f.wall_cells,
        100.0 * f.interior_free,
        f.interior_cells,
        f.elapsed
    ))
}

/// Numerical integration of the unicycle ODE, independent of the closed form.
fn rk4(pose: Pose2D, v: f64, w: f64, dt: f64, n: usize) -> Pose2D {
    let f = |th: f64| (v * th.cos(), v * th.sin(), w);
    let (mut x, mut y, mut th) = (pose.x, pose.y, pose.theta);
    let h = dt / n as f64;
    for _ in 0..n {
        let k1 = f(th);
        let k2 = f(th + h / 2.0 * k1.2);
        let k3 = f(th + h / 2.0 * k2.2);
        let k4 = f(th + h * k3.2);
        x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        y += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        th += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
    }
    Pose2D::new(x, y, th)
}

fn kinematics() -> Outcome {
    let open = World {
        width: 1e6,
        height: 1e6,
        obstacles: vec![],
        spawn: Pose2D::new(5e5, 5e5, 0.0),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut worst_rk4: f64 = 0.0;
    for _ in 0..10_000 {
        let pose = Pose2D::new(
            5e5 + rng.random_range(-100.0..100.0),
            5e5 + rng.random_range(-100.0..100.0),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let twist = if rng.random_bool(0.1) {
            TwistCommand::new(rng.random_range(-1.0..1.0), 0.0)
        } else {
            TwistCommand::new(rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0))
        };
        let dt = rng.random_range(0.001..0.5);
        let mut s = sim::SimState::new(pose, 0);
        s.commanded = twist;
        let a = sim::step(&s, &open, dt, f64::INFINITY).pose;
        let b = integrate_odometry(pose, twist, dt);
        let d = (a.x - b.x).abs().max((a.y - b.y).abs()).max(normalize_angle(a.theta - b.theta).abs());
        worst = worst.max(d);
        let r = rk4(pose, twist.linear, twist.angular, dt, 100);
        worst_rk4 = worst_rk4.max((b.x - r.x).abs().max((b.y - r.y).abs()).max(normalize_angle(b.theta - r.theta).abs()));
    }
    check(worst <= 1e-9, format!("max disagreement {worst:e}"))?;
    check(worst_rk4 <= 1e-8, format!("closed form vs RK4 {worst_rk4:e}"))?;

    let n = 2000;
    let mut s = sim::SimState::new(Pose2D::new(5e5, 5e5, 0.7), 0);
    s.commanded = TwistCommand::new(0.3, 0.0);
    let start = s.pose;
    for _ in 0..n {
        s = sim::step(&s, &open, 0.05, f64::INFINITY);
    }
    let dist = ((s.pose.x - start.x).powi(2) + (s.pose.y - start.y).powi(2)).sqrt();
    let err = (dist - 0.3 * n as f64 * 0.05).abs();
    check(err <= 1e-9 * n as f64, format!("straight line off by {err:e}"))?;
    Ok(format!(
        "10000 samples, sim vs odometry {worst:.1e}, vs RK4 {worst_rk4:.1e}; straight-line error {err:.1e}"
    ))
}

fn random_value(rng: &mut ChaCha8Rng, depth: u32) -> Value {
    match rng.random_range(0..if depth == 0 { 4 } else { 6 }) {
        0 => Value::Null,
        1 => json!(rng.random_bool(0.5)),
        2 => json!(rng.random_range(-1e9..1e9)),
        3 => json!(format!("s{}\"\\é{}", rng.random::<u16>(), rng.random::<u8>())),
        4 => Value::Array((0..rng.random_range(0..4)).map(|_| random_value(rng, depth - 1)).collect()),
        _ => Value::Object(
            (0..rng.random_range(0..4))
                .map(|i| (format!("k{i}"), random_value(rng, depth - 1)))
                .collect(),
        ),
    }
}

fn protocol_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..2000 {
        let topic = format!("/t{}", rng.random_range(0..50));
        let mut m = match rng.random_range(0..5) {
            0 => {
                let Value::Object(o) = random_value(&mut rng, 3) else {
                    continue;
                };
                BridgeMessage::publish(&topic, Value::Object(o))
            }
            1 => BridgeMessage::subscribe(&topic, "std_msgs/String"),
            2 => BridgeMessage::advertise(&topic, "geometry_msgs/Twist"),
            3 => BridgeMessage::unsubscribe(&topic),
            _ => BridgeMessage::unadvertise(&topic),
        };
        if rng.random_bool(0.5) {
            m = m.with_id(format!("id-{i}"));
        }
        let bytes = encode_message(&m).map_err(|e| e.to_string())?;
        check(decode_message(&bytes).as_ref() == Ok(&m), format!("message {i} did not round-trip"))?;
    }
    golden::check_all()?;
    Ok(format!("2000 random frames, {} golden frames", golden::cases().len()))
}

async fn recorder_replay() -> Outcome {
    let rig = Rig::start("tour_guide").await;
    expect_ok(rig.post("/teleop", json!({"command": "rotate_left", "scale": 0.5})).await, "teleop").await?;
    expect_ok(rig.post("/speak", json!({"text": "Hello \"there\"\nfriend"})).await, "speak").await?;
    expect_ok(rig.post_raw("/frames?frame_id=1", camera_jpeg()).await, "frame").await?;
    let snap = expect_ok(rig.post("/snapshot", json!({"note": "hall"})).await, "snapshot").await?;
    let png = caris_gateway::video::encode_png(&RgbImage::from_pixel(8, 8, Rgb([1, 2, 3])));
    expect_ok(
        rig.post("/llm/complete", json!({"prompt": "what is this", "provider": "llava-7b", "image_base64": b64(&png)})).await,
        "llm",
    )
    .await?;
    expect_ok(rig.post_raw("/transcribe", fixture_audio("ok")).await, "transcribe").await?;
    let dir = rig.gw.gateway.session.dir().to_path_buf();
    rig.gw.shutdown();

    let raw = std::fs::read(dir.join("events.jsonl")).map_err(|e| e.to_string())?;
    let events = replay(&dir).map_err(|e| e.to_string())?;
    check(serialize_events(&events).into_bytes() == raw, "re-serialized log differs")?;
    check(events.iter().enumerate().all(|(i, e)| e.seq == i as u64 + 1), "seq has gaps")?;
    check(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp), "timestamps go backwards")?;

    let log = std::fs::read_to_string(dir.join("commands.log")).map_err(|e| e.to_string())?;
    check(log.lines().any(|l| l.contains(" TELEOP rotate_left 0.5")), format!("commands.log: {log}"))?;
    check(log.lines().any(|l| l.contains(" TTS ")), "commands.log lacks TTS")?;
    let snap_file = dir.join(snap["file"].as_str().unwrap_or_default());
    check(std::fs::read(&snap_file).map_err(|e| e.to_string())?.starts_with(b"\x89PNG"), "snapshot is not PNG")?;
    let llm = events.iter().find(|e| e.kind == EventKind::Llm).ok_or("no llm event")?;
    let exchange: Value = serde_json::from_slice(
        &std::fs::read(dir.join(llm.payload["file"].as_str().unwrap_or_default())).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    check(exchange["response"].is_string(), "exchange JSON without response")?;
    check(std::fs::read(dir.join(format!("llm/{}.png", llm.seq))).ok() == Some(png), "llm image missing")?;
    check(dir.join("scenario.json").exists(), "scenario.json missing")?;
    Ok(format!("{} events byte-identical, artifacts present", events.len()))
}

async fn responsiveness() -> Outcome {
    let stall = Duration::from_secs(30);
    let mut overrides: HashMap<String, Arc<dyn LlmProvider>> = HashMap::new();
    overrides.insert("gemini-flash-1.5".into(), Arc::new(MockProvider::stalling(stall)));
    let rig = Rig::start_with("tour_guide", Pacing::Realtime, |c| {
        c.provider_overrides = overrides;
        c.llm_timeout = Duration::from_secs(45);
    })
    .await;
    let mut taps = rig.sim().command_taps();

    let http = rig.http.clone();
    let url = rig.url("/llm/complete");
    let llm_started = Instant::now();
    let llm = tokio::spawn(async move {
        let r = http.post(url).json(&json!({"prompt": "take your time"})).send().await;
        (r.map(|r| r.status()), llm_started.elapsed())
    });
    tokio::time::sleep(Duration::from_millis(200)).await;

    let mut latencies = Vec::new();
    let commands = ["forward", "rotate_left", "backward", "rotate_right", "stop"];
    let window = stall - Duration::from_millis(1500);
    let mut tick = tokio::time::interval(Duration::from_millis(50));
    while llm_started.elapsed() < window {
        tick.tick().await;
        let cmd = commands[latencies.len() % commands.len()];
        let t0 = Instant::now();
        let r = rig
            .http
            .post(rig.url("/teleop"))
            .json(&json!({"command": cmd, "scale": 0.2}))
            .send()
            .await
            .map_err(|e| e.to_string())?;
        latencies.push(t0.elapsed());
        check(r.status() == StatusCode::ACCEPTED, format!("teleop returned {}", r.status()))?;
        check(!llm.is_finished(), "llm call ended early")?;
    }
    let mut delivered = 0;
    while delivered < latencies.len() {
        match tokio::time::timeout(Duration::from_secs(2), taps.recv()).await {
            Ok(Ok(_)) => delivered += 1,
            _ => break,
        }
    }
    let (status, llm_elapsed) = llm.await.map_err(|e| e.to_string())?;
    check(status.ok() == Some(StatusCode::OK), "stalled llm call failed")?;
    check(llm_elapsed >= stall, format!("llm returned after {llm_elapsed:?}"))?;

    latencies.sort();
    let p99 = latencies[(latencies.len() * 99).div_ceil(100) - 1];
    check(delivered >= latencies.len(), format!("{delivered} of {} commands reached the robot", latencies.len()))?;
    check(p99 < Duration::from_millis(50), format!("p99 {p99:?}"))?;
    Ok(format!(
        "{} teleops during a {:.1} s llm stall, p99 {:.2} ms, max {:.2} ms",
        latencies.len(),
        llm_elapsed.as_secs_f64(),
        p99.as_secs_f64() * 1e3,
        latencies.last().unwrap().as_secs_f64() * 1e3
    ))
}

fn report(name: &str, outcome: Outcome, failures: &mut usize) {
    match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(why) => {
            *failures += 1;
            println!("FAIL {name}: {why}");
        }
    }
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let mut failures = 0;
    report("feature checklist end-to-end", rt.block_on(feature_checklist()), &mut failures);
    report("assignment oracle", assignment_oracle(), &mut failures);
    report("tracker identity", tracker_identity(), &mut failures);
    report("filter sanity", filter_sanity(), &mut failures);
    report("mapping fidelity", mapping_fidelity(), &mut failures);
    report("kinematics", kinematics(), &mut failures);
    report("protocol round-trip", protocol_round_trip(), &mut failures);
    report("recorder replay", rt.block_on(recorder_replay()), &mut failures);
    report("teleop responsiveness", rt.block_on(responsiveness()), &mut failures);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
