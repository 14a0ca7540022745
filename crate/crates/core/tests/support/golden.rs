//! Reference wire frames shared by the core and acceptance suites.

use caris_core::geometry::LaserScan;
use caris_core::protocol::*;
use caris_core::{Pose2D, TwistCommand};

pub fn cases() -> Vec<(&'static str, &'static str, BridgeMessage)> {
    let scan = LaserScan {
        angle_min: -1.0,
        angle_max: 0.5,
        angle_increment: 0.5,
        range_max: 8.0,
        ranges: vec![1.0, f64::INFINITY, 2.5, 8.0],
    };
    vec![
        (
            "cmd_vel",
            include_str!("../golden/cmd_vel.json"),
            BridgeMessage::publish("/cmd_vel", twist_to_msg(TwistCommand::new(0.15, -0.5))),
        ),
        (
            "subscribe_scan",
            include_str!("../golden/subscribe_scan.json"),
            BridgeMessage::subscribe("/scan", SCAN_TYPE).with_id("scan-1"),
        ),
        (
            "advertise_tts",
            include_str!("../golden/advertise_tts.json"),
            BridgeMessage::advertise("/tts", SPEECH_TYPE),
        ),
        ("tts", include_str!("../golden/tts.json"), BridgeMessage::publish("/tts", speech_to_msg("Hello, welcome!"))),
        ("sim_step", include_str!("../golden/sim_step.json"), BridgeMessage::publish("/sim/step", sim_step_to_msg(3))),
        ("unsubscribe_odom", include_str!("../golden/unsubscribe_odom.json"), BridgeMessage::unsubscribe("/odom")),
        (
            "odom",
            include_str!("../golden/odom.json"),
            BridgeMessage::publish("/odom", odom_to_msg(Pose2D::new(1.0, 2.0, 0.0), TwistCommand::new(0.3, 0.0), 1.5)),
        ),
        (
            "scan",
            include_str!("../golden/scan.json"),
            BridgeMessage::publish("/scan", scan_to_msg(&scan, 0.1, "base_laser")),
        ),
    ]
}

/// Checks encoding, decoding and payload recovery for every frame.
pub fn check_all() -> Result<(), String> {
    for (name, golden, m) in cases() {
        let bytes = encode_message(&m).map_err(|e| format!("{name}: {e}"))?;
        if bytes != golden.as_bytes() {
            return Err(format!("{name}: encoded {} != golden {golden}", String::from_utf8_lossy(&bytes)));
        }
        let decoded = decode_message(golden.as_bytes()).map_err(|e| format!("{name}: {e}"))?;
        if decoded != m {
            return Err(format!("{name}: decoded frame differs"));
        }
        let msg = decoded.msg.as_ref();
        let ok = match name {
            "cmd_vel" => msg.map(twist_from_msg) == Some(Ok(TwistCommand::new(0.15, -0.5))),
            "tts" => msg.map(speech_from_msg) == Some(Ok("Hello, welcome!".to_string())),
            "sim_step" => msg.map(sim_step_from_msg) == Some(Ok(3)),
            "odom" => matches!(msg.map(odom_from_msg), Some(Ok((p, t, s))) if p == Pose2D::new(1.0, 2.0, 0.0) && t.linear == 0.3 && (s - 1.5).abs() < 1e-9),
            "scan" => matches!(msg.map(scan_from_msg), Some(Ok((s, t))) if s.ranges.len() == 4 && s.ranges[1].is_infinite() && s.ranges[2] == 2.5 && (t - 0.1).abs() < 1e-9),
            _ => true,
        };
        if !ok {
            return Err(format!("{name}: payload not recovered"));
        }
    }
    Ok(())
}
