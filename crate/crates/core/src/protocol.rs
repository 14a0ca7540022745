//! rosbridge v2.0 JSON envelope, message payload conversions and teleop mapping.
//!
//! Frames are single JSON objects whose top-level keys appear in the order
//! `op`, `topic`, `type`, `msg`, `id`; absent optionals are omitted. Payload
//! objects keep their insertion order so golden frames are byte-stable.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geometry::{LaserScan, Pose2D, TwistCommand};

pub const TWIST_TYPE: &str = "geometry_msgs/Twist";
pub const SCAN_TYPE: &str = "sensor_msgs/LaserScan";
pub const ODOM_TYPE: &str = "nav_msgs/Odometry";
pub const SPEECH_TYPE: &str = "caris_msgs/Speech";
pub const SIM_STEP_TYPE: &str = "caris_msgs/SimStep";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown op {0:?}")]
    UnknownOp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Advertise,
    Unadvertise,
    Publish,
    Subscribe,
    Unsubscribe,
}

impl Op {
    pub fn as_str(&self) -> &'static str {
        match self {
            Op::Advertise => "advertise",
            Op::Unadvertise => "unadvertise",
            Op::Publish => "publish",
            Op::Subscribe => "subscribe",
            Op::Unsubscribe => "unsubscribe",
        }
    }

    pub fn parse(s: &str) -> Option<Op> {
        Some(match s {
            "advertise" => Op::Advertise,
            "unadvertise" => Op::Unadvertise,
            "publish" => Op::Publish,
            "subscribe" => Op::Subscribe,
            "unsubscribe" => Op::Unsubscribe,
            _ => return None,
        })
    }
}

/// Treatment of top-level keys outside the envelope when decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownFields {
    #[default]
    Ignore,
    Preserve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeMessage {
    pub op: Op,
    pub topic: String,
    pub msg_type: Option<String>,
    pub msg: Option<Value>,
    pub id: Option<String>,
    /// Unrecognized top-level keys, kept only with [`UnknownFields::Preserve`].
    pub extra: Map<String, Value>,
}

impl BridgeMessage {
    fn bare(op: Op, topic: &str) -> Self {
        Self {
            op,
            topic: topic.to_string(),
            msg_type: None,
            msg: None,
            id: None,
            extra: Map::new(),
        }
    }

    pub fn publish(topic: &str, msg: Value) -> Self {
        Self {
            msg: Some(msg),
            ..Self::bare(Op::Publish, topic)
        }
    }

    pub fn subscribe(topic: &str, msg_type: &str) -> Self {
        Self {
            msg_type: Some(msg_type.to_string()),
            ..Self::bare(Op::Subscribe, topic)
        }
    }

    pub fn unsubscribe(topic: &str) -> Self {
        Self::bare(Op::Unsubscribe, topic)
    }

    pub fn advertise(topic: &str, msg_type: &str) -> Self {
        Self {
            msg_type: Some(msg_type.to_string()),
            ..Self::bare(Op::Advertise, topic)
        }
    }

    pub fn unadvertise(topic: &str) -> Self {
        Self::bare(Op::Unadvertise, topic)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.topic.is_empty() {
            return Err(ProtocolError::InvalidMessage("empty topic".into()));
        }
        match self.op {
            Op::Advertise | Op::Subscribe if self.msg_type.is_none() => Err(
                ProtocolError::InvalidMessage(format!("{} requires \"type\"", self.op.as_str())),
            ),
            Op::Publish => match &self.msg {
                Some(Value::Object(_)) => Ok(()),
                Some(_) => Err(ProtocolError::InvalidMessage(
                    "publish \"msg\" must be an object".into(),
                )),
                None => Err(ProtocolError::InvalidMessage(
                    "publish requires \"msg\"".into(),
                )),
            },
            _ => Ok(()),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    op: &'static str,
    topic: &'a str,
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    msg_type: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    msg: Option<&'a Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<&'a str>,
    #[serde(flatten)]
    extra: &'a Map<String, Value>,
}

/// Serializes a message to a UTF-8 JSON frame.
pub fn encode_message(m: &BridgeMessage) -> Result<Vec<u8>, ProtocolError> {
    m.validate()?;
    let env = Envelope {
        op: m.op.as_str(),
        topic: &m.topic,
        msg_type: m.msg_type.as_deref(),
        msg: m.msg.as_ref(),
        id: m.id.as_deref(),
        extra: &m.extra,
    };
    serde_json::to_vec(&env).map_err(|e| ProtocolError::InvalidMessage(e.to_string()))
}

pub fn decode_message(bytes: &[u8]) -> Result<BridgeMessage, ProtocolError> {
    decode_message_with(bytes, UnknownFields::Ignore)
}

pub fn decode_message_with(
    bytes: &[u8],
    unknown: UnknownFields,
) -> Result<BridgeMessage, ProtocolError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| ProtocolError::Parse(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(ProtocolError::Parse("frame is not a JSON object".into()));
    };
    let op = match obj.shift_remove("op") {
        Some(Value::String(s)) => Op::parse(&s).ok_or(ProtocolError::UnknownOp(s))?,
        Some(other) => return Err(ProtocolError::UnknownOp(other.to_string())),
        None => return Err(ProtocolError::InvalidMessage("missing \"op\"".into())),
    };
    let topic = match obj.shift_remove("topic") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(ProtocolError::InvalidMessage("\"topic\" must be a string".into())),
        None => return Err(ProtocolError::InvalidMessage("missing \"topic\"".into())),
    };
    let msg_type = match obj.shift_remove("type") {
        Some(Value::String(s)) => Some(s),
        Some(Value::Null) | None => None,
        Some(_) => return Err(ProtocolError::InvalidMessage("\"type\" must be a string".into())),
    };
    let msg = obj.shift_remove("msg");
    let id = match obj.shift_remove("id") {
        Some(Value::String(s)) => Some(s),
        Some(Value::Null) | None => None,
        // rosbridge peers occasionally send numeric ids
        Some(other) => Some(other.to_string()),
    };
    let extra = match unknown {
        UnknownFields::Ignore => Map::new(),
        UnknownFields::Preserve => obj,
    };
    let m = BridgeMessage {
        op,
        topic,
        msg_type,
        msg,
        id,
        extra,
    };
    m.validate()?;
    Ok(m)
}

/// Topic names used on the robot side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Topics {
    pub cmd_vel: String,
    pub scan: String,
    pub odom: String,
    pub tts: String,
    pub sim_step: String,
}

impl Default for Topics {
    fn default() -> Self {
        Self {
            cmd_vel: "/cmd_vel".into(),
            scan: "/scan".into(),
            odom: "/odom".into(),
            tts: "/tts".into(),
            sim_step: "/sim/step".into(),
        }
    }
}

fn field_f64(v: &Value, path: &[&str]) -> Result<f64, ProtocolError> {
    let mut cur = v;
    for key in path {
        cur = cur
            .get(key)
            .ok_or_else(|| ProtocolError::InvalidMessage(format!("missing field {}", path.join("."))))?;
    }
    cur.as_f64()
        .ok_or_else(|| ProtocolError::InvalidMessage(format!("field {} is not a number", path.join("."))))
}

/// `geometry_msgs/Twist` payload. Only the planar components carry values.
pub fn twist_to_msg(t: TwistCommand) -> Value {
    json!({
        "linear": {"x": t.linear, "y": 0, "z": 0},
        "angular": {"x": 0, "y": 0, "z": t.angular},
    })
}

pub fn twist_from_msg(v: &Value) -> Result<TwistCommand, ProtocolError> {
    Ok(TwistCommand {
        linear: field_f64(v, &["linear", "x"])?,
        angular: field_f64(v, &["angular", "z"])?,
    })
}

pub fn speech_to_msg(text: &str) -> Value {
    json!({ "text": text })
}

pub fn speech_from_msg(v: &Value) -> Result<String, ProtocolError> {
    v.get("text")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProtocolError::InvalidMessage("speech message without text".into()))
}

pub fn sim_step_to_msg(steps: u32) -> Value {
    json!({ "steps": steps })
}

pub fn sim_step_from_msg(v: &Value) -> Result<u32, ProtocolError> {
    v.get("steps")
        .and_then(Value::as_u64)
        .map(|s| s as u32)
        .ok_or_else(|| ProtocolError::InvalidMessage("sim step without steps".into()))
}

fn stamp(seconds: f64) -> Value {
    let secs = seconds.floor();
    let nsecs = ((seconds - secs) * 1e9).round().min(999_999_999.0);
    json!({ "secs": secs as u64, "nsecs": nsecs as u64 })
}

fn stamp_from(v: &Value) -> f64 {
    let secs = v.pointer("/header/stamp/secs").and_then(Value::as_f64).unwrap_or(0.0);
    let nsecs = v.pointer("/header/stamp/nsecs").and_then(Value::as_f64).unwrap_or(0.0);
    secs + nsecs * 1e-9
}

/// `sensor_msgs/LaserScan` payload; beams without a return become `null`.
pub fn scan_to_msg(scan: &LaserScan, stamp_s: f64, frame_id: &str) -> Value {
    let ranges: Vec<Value> = scan
        .ranges
        .iter()
        .map(|r| if r.is_finite() { json!(r) } else { Value::Null })
        .collect();
    json!({
        "header": {"stamp": stamp(stamp_s), "frame_id": frame_id},
        "angle_min": scan.angle_min,
        "angle_max": scan.angle_max,
        "angle_increment": scan.angle_increment,
        "time_increment": 0.0,
        "scan_time": 0.0,
        "range_min": 0.0,
        "range_max": scan.range_max,
        "ranges": ranges,
        "intensities": [],
    })
}

pub fn scan_from_msg(v: &Value) -> Result<(LaserScan, f64), ProtocolError> {
    let ranges = v
        .get("ranges")
        .and_then(Value::as_array)
        .ok_or_else(|| ProtocolError::InvalidMessage("scan without ranges".into()))?
        .iter()
        .map(|r| r.as_f64().unwrap_or(f64::INFINITY))
        .collect();
    let scan = LaserScan {
        angle_min: field_f64(v, &["angle_min"])?,
        angle_max: field_f64(v, &["angle_max"])?,
        angle_increment: field_f64(v, &["angle_increment"])?,
        range_max: field_f64(v, &["range_max"])?,
        ranges,
    };
    if !scan.is_consistent() {
        return Err(ProtocolError::InvalidMessage(
            "scan length does not match its angular parameters".into(),
        ));
    }
    Ok((scan, stamp_from(v)))
}

/// Planar `nav_msgs/Odometry` payload (yaw carried as a z-axis quaternion).
pub fn odom_to_msg(pose: Pose2D, twist: TwistCommand, stamp_s: f64) -> Value {
    let half = pose.theta / 2.0;
    json!({
        "header": {"stamp": stamp(stamp_s), "frame_id": "odom"},
        "child_frame_id": "base_link",
        "pose": {"pose": {
            "position": {"x": pose.x, "y": pose.y, "z": 0.0},
            "orientation": {"x": 0.0, "y": 0.0, "z": half.sin(), "w": half.cos()},
        }},
        "twist": {"twist": {
            "linear": {"x": twist.linear, "y": 0.0, "z": 0.0},
            "angular": {"x": 0.0, "y": 0.0, "z": twist.angular},
        }},
    })
}

pub fn odom_from_msg(v: &Value) -> Result<(Pose2D, TwistCommand, f64), ProtocolError> {
    let qz = field_f64(v, &["pose", "pose", "orientation", "z"])?;
    let qw = field_f64(v, &["pose", "pose", "orientation", "w"])?;
    let pose = Pose2D::new(
        field_f64(v, &["pose", "pose", "position", "x"])?,
        field_f64(v, &["pose", "pose", "position", "y"])?,
        2.0 * qz.atan2(qw),
    );
    let twist = TwistCommand {
        linear: field_f64(v, &["twist", "twist", "linear", "x"]).unwrap_or(0.0),
        angular: field_f64(v, &["twist", "twist", "angular", "z"]).unwrap_or(0.0),
    };
    Ok((pose, twist, stamp_from(v)))
}

/// Discrete wizard motion command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleopAction {
    Forward,
    Backward,
    RotateLeft,
    RotateRight,
    Stop,
}

impl TeleopAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            TeleopAction::Forward => "forward",
            TeleopAction::Backward => "backward",
            TeleopAction::RotateLeft => "rotate_left",
            TeleopAction::RotateRight => "rotate_right",
            TeleopAction::Stop => "stop",
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeleopCommand {
    pub command: TeleopAction,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

impl TeleopCommand {
    pub fn new(command: TeleopAction, scale: f64) -> Self {
        Self { command, scale }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.command != TeleopAction::Stop && !(0.0..=1.0).contains(&self.scale) {
            return Err(ProtocolError::InvalidMessage(format!(
                "teleop scale {} outside [0, 1]",
                self.scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeleopLimits {
    pub max_linear: f64,
    pub max_angular: f64,
}

impl Default for TeleopLimits {
    fn default() -> Self {
        Self {
            max_linear: 0.3,
            max_angular: 0.5,
        }
    }
}

pub fn teleop_to_twist(c: TeleopCommand, limits: TeleopLimits) -> TwistCommand {
    let s = c.scale.clamp(0.0, 1.0);
    match c.command {
        TeleopAction::Forward => TwistCommand::new(limits.max_linear * s, 0.0),
        TeleopAction::Backward => TwistCommand::new(-limits.max_linear * s, 0.0),
        TeleopAction::RotateLeft => TwistCommand::new(0.0, limits.max_angular * s),
        TeleopAction::RotateRight => TwistCommand::new(0.0, -limits.max_angular * s),
        TeleopAction::Stop => TwistCommand::ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_cmd_vel_frame() {
        let m = BridgeMessage::publish("/cmd_vel", twist_to_msg(TwistCommand::new(0.3, 0.0)));
        let bytes = encode_message(&m).unwrap();
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            r#"{"op":"publish","topic":"/cmd_vel","msg":{"linear":{"x":0.3,"y":0,"z":0},"angular":{"x":0,"y":0,"z":0.0}}}"#
        );
    }

    #[test]
    fn golden_subscribe_frame() {
        let bytes = encode_message(&BridgeMessage::subscribe("/scan", SCAN_TYPE)).unwrap();
        assert_eq!(
            bytes,
            br#"{"op":"subscribe","topic":"/scan","type":"sensor_msgs/LaserScan"}"#
        );
    }

    #[test]
    fn advertise_without_type_is_invalid() {
        let mut m = BridgeMessage::advertise("/cmd_vel", TWIST_TYPE);
        m.msg_type = None;
        assert!(matches!(encode_message(&m), Err(ProtocolError::InvalidMessage(_))));
    }

    #[test]
    fn publish_without_msg_is_invalid() {
        let mut m = BridgeMessage::publish("/tts", json!({}));
        m.msg = None;
        assert!(matches!(encode_message(&m), Err(ProtocolError::InvalidMessage(_))));
        assert!(matches!(
            decode_message(br#"{"op":"publish","topic":"/tts"}"#),
            Err(ProtocolError::InvalidMessage(_))
        ));
    }

    #[test]
    fn unknown_op_and_truncation() {
        assert_eq!(
            decode_message(br#"{"op":"noop"}"#),
            Err(ProtocolError::UnknownOp("noop".into()))
        );
        let full = encode_message(&BridgeMessage::subscribe("/scan", SCAN_TYPE)).unwrap();
        assert!(matches!(
            decode_message(&full[..full.len() - 3]),
            Err(ProtocolError::Parse(_))
        ));
    }

    #[test]
    fn extra_fields_ignored_or_preserved() {
        let raw = br#"{"op":"subscribe","topic":"/scan","type":"sensor_msgs/LaserScan","throttle_rate":100}"#;
        let ignored = decode_message(raw).unwrap();
        assert!(ignored.extra.is_empty());
        let kept = decode_message_with(raw, UnknownFields::Preserve).unwrap();
        assert_eq!(kept.extra.get("throttle_rate"), Some(&json!(100)));
        assert_eq!(encode_message(&kept).unwrap(), raw.to_vec());
    }

    #[test]
    fn teleop_mapping() {
        let lim = TeleopLimits::default();
        let t = teleop_to_twist(TeleopCommand::new(TeleopAction::Forward, 0.5), lim);
        assert_eq!(t, TwistCommand::new(0.15, 0.0));
        let t = teleop_to_twist(TeleopCommand::new(TeleopAction::RotateLeft, 1.0), lim);
        assert_eq!(t, TwistCommand::new(0.0, 0.5));
        let t = teleop_to_twist(TeleopCommand::new(TeleopAction::RotateRight, 1.0), lim);
        assert_eq!(t, TwistCommand::new(0.0, -0.5));
        let t = teleop_to_twist(TeleopCommand::new(TeleopAction::Backward, 1.0), lim);
        assert_eq!(t, TwistCommand::new(-0.3, 0.0));
        for s in [0.0, 0.3, 1.0, 7.0] {
            let t = teleop_to_twist(TeleopCommand::new(TeleopAction::Stop, s), lim);
            assert_eq!(t, TwistCommand::ZERO);
        }
    }

    #[test]
    fn teleop_json_names() {
        let c: TeleopCommand = serde_json::from_str(r#"{"command":"rotate_left"}"#).unwrap();
        assert_eq!(c, TeleopCommand::new(TeleopAction::RotateLeft, 1.0));
        assert!(serde_json::from_str::<TeleopCommand>(r#"{"command":"sideways"}"#).is_err());
        assert!(TeleopCommand::new(TeleopAction::Forward, 1.5).validate().is_err());
    }

    #[test]
    fn odom_and_scan_payloads_round_trip() {
        let pose = Pose2D::new(1.5, -0.25, 2.0);
        let (p, t, s) = odom_from_msg(&odom_to_msg(pose, TwistCommand::new(0.2, -0.1), 12.5)).unwrap();
        assert!((p.x - pose.x).abs() < 1e-12 && (p.y - pose.y).abs() < 1e-12);
        assert!((p.theta - pose.theta).abs() < 1e-12);
        assert_eq!(t, TwistCommand::new(0.2, -0.1));
        assert!((s - 12.5).abs() < 1e-9);

        let scan = LaserScan {
            angle_min: 0.0,
            angle_max: 1.0,
            angle_increment: 0.5,
            range_max: 8.0,
            ranges: vec![1.0, f64::INFINITY, 2.5],
        };
        let (back, _) = scan_from_msg(&scan_to_msg(&scan, 0.0, "laser")).unwrap();
        assert_eq!(back, scan);
    }
}
