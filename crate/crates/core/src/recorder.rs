//! Append-only session log: `events.jsonl` plus the plain-text command log,
//! per-exchange LLM JSON files and PNG snapshots.
//!
//! Layout of one session directory:
//!
//! ```text
//! sessions/20250101T120000Z_tour_guide/
//!   events.jsonl      one SessionEvent per line
//!   commands.log      "<t> TELEOP forward 1.0" / "<t> TTS hello"
//!   llm/<seq>.json    full ChatExchange (+ llm/<seq>.png when an image was sent)
//!   snapshots/<seq>.png
//!   scenario.json
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::clock::Clock;
use crate::conversation::{Attribution, ChatExchange, InteractionLog};
use crate::protocol::TeleopCommand;
use crate::scenario::{Feature, ScenarioConfig};
use crate::TwistCommand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Teleop,
    Tts,
    Stt,
    Snapshot,
    Llm,
    Track,
    Registry,
    Scenario,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::Teleop,
        EventKind::Tts,
        EventKind::Stt,
        EventKind::Snapshot,
        EventKind::Llm,
        EventKind::Track,
        EventKind::Registry,
        EventKind::Scenario,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Teleop => "teleop",
            EventKind::Tts => "tts",
            EventKind::Stt => "stt",
            EventKind::Snapshot => "snapshot",
            EventKind::Llm => "llm",
            EventKind::Track => "track",
            EventKind::Registry => "registry",
            EventKind::Scenario => "scenario",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Keys every payload of this kind must carry.
    pub fn required_keys(&self) -> &'static [&'static str] {
        match self {
            EventKind::Teleop => &["command", "scale", "linear", "angular"],
            EventKind::Tts => &["text"],
            EventKind::Stt => &["text", "audio_bytes"],
            EventKind::Snapshot => &["file", "sha256"],
            EventKind::Llm => &["exchange_id", "provider", "model", "file", "ok"],
            EventKind::Track => &["frame_id", "detections", "confirmed", "deleted"],
            EventKind::Registry => &["action"],
            EventKind::Scenario => &["action"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// Milliseconds since session start.
    pub timestamp: u64,
    pub kind: EventKind,
    pub payload: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SessionEvent {
    /// Persons this event is about: `person_id` plus any ids listed in the
    /// payload's `persons` array.
    pub fn persons(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self.person_id.into_iter().collect();
        if let Some(Value::Array(list)) = self.payload.get("persons") {
            out.extend(list.iter().filter_map(Value::as_u64));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn concerns(&self, person: u64) -> bool {
        self.persons().contains(&person)
    }
}

/// An event before the recorder assigns `seq` and `timestamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEvent {
    pub kind: EventKind,
    pub payload: Map<String, Value>,
    pub person_id: Option<u64>,
    pub note: Option<String>,
}

impl NewEvent {
    pub fn new(kind: EventKind, payload: Value) -> Self {
        let payload = match payload {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        Self {
            kind,
            payload,
            person_id: None,
            note: None,
        }
    }

    pub fn teleop(cmd: &TeleopCommand, twist: TwistCommand) -> Self {
        Self::new(
            EventKind::Teleop,
            json!({"command": cmd.command.as_str(), "scale": cmd.scale, "linear": twist.linear, "angular": twist.angular}),
        )
    }

    pub fn tts(text: &str) -> Self {
        Self::new(EventKind::Tts, json!({ "text": text }))
    }

    pub fn stt(text: &str, audio_bytes: usize) -> Self {
        Self::new(EventKind::Stt, json!({"text": text, "audio_bytes": audio_bytes}))
    }

    pub fn attributed(mut self, attribution: &Attribution) -> Self {
        self.person_id = attribution.person_id;
        self.note = attribution.note.clone();
        self
    }

    pub fn with_person(mut self, person_id: Option<u64>) -> Self {
        self.person_id = person_id;
        self
    }

    pub fn with_note(mut self, note: Option<String>) -> Self {
        self.note = note;
        self
    }

    fn check_schema(&self) -> Result<(), RecorderError> {
        match self.kind.required_keys().iter().find(|k| !self.payload.contains_key(**k)) {
            Some(k) => Err(RecorderError::InvalidPayload(format!("{} event without {k:?}", self.kind.as_str()))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum RecorderError {
    #[error("storage error: {0}")]
    StorageError(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("{0} is disabled by the active scenario")]
    DisabledByScenario(Feature),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid event payload: {0}")]
    InvalidPayload(String),
    #[error("corrupt session at line {line}: {reason}")]
    CorruptSession { line: usize, reason: String },
}

impl From<std::io::Error> for RecorderError {
    fn from(e: std::io::Error) -> Self {
        RecorderError::StorageError(e.to_string())
    }
}

pub const EVENTS_FILE: &str = "events.jsonl";
pub const COMMANDS_FILE: &str = "commands.log";
pub const SCENARIO_FILE: &str = "scenario.json";

struct Writer {
    events: File,
    commands: File,
    next_seq: u64,
    last_timestamp: u64,
    closed: bool,
}

type Observer = Box<dyn Fn(&SessionEvent) + Send + Sync>;

/// An open session. Writes are serialized; every `record*` call returns only
/// after the event line has been flushed to disk.
pub struct Session {
    dir: PathBuf,
    clock: Arc<dyn Clock>,
    scenario: RwLock<ScenarioConfig>,
    writer: Mutex<Writer>,
    observer: RwLock<Option<Observer>>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("dir", &self.dir).finish_non_exhaustive()
    }
}

/// Creates `<root>/sessions/<UTC timestamp>_<scenario>[-N]/`.
pub fn start_session(root: &Path, scenario: &ScenarioConfig, clock: Arc<dyn Clock>) -> Result<Session, RecorderError> {
    let meta = fs::metadata(root).map_err(|e| RecorderError::StorageError(format!("{}: {e}", root.display())))?;
    if !meta.is_dir() {
        return Err(RecorderError::StorageError(format!("{} is not a directory", root.display())));
    }
    if meta.permissions().readonly() {
        return Err(RecorderError::StorageError(format!("{} is read-only", root.display())));
    }
    let sessions = root.join("sessions");
    fs::create_dir_all(&sessions)?;

    let stem = format!("{}_{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"), scenario.name);
    let mut dir = sessions.join(&stem);
    let mut n = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                dir = sessions.join(format!("{stem}-{n}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    fs::create_dir(dir.join("llm"))?;
    fs::create_dir(dir.join("snapshots"))?;
    let scenario_json = serde_json::to_vec_pretty(scenario).map_err(|e| RecorderError::StorageError(e.to_string()))?;
    fs::write(dir.join(SCENARIO_FILE), scenario_json)?;
    let open = |name: &str| OpenOptions::new().create(true).append(true).open(dir.join(name));
    let events = open(EVENTS_FILE)?;
    let commands = open(COMMANDS_FILE)?;
    events.sync_all()?;
    commands.sync_all()?;
    File::open(&dir)?.sync_all()?;

    Ok(Session {
        dir,
        clock,
        scenario: RwLock::new(scenario.clone()),
        writer: Mutex::new(Writer {
            events,
            commands,
            next_seq: 1,
            last_timestamp: 0,
            closed: false,
        }),
        observer: RwLock::new(None),
    })
}

fn log_text(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n").replace('\r', "\\r")
}

pub fn is_png(bytes: &[u8]) -> Result<(), RecorderError> {
    const SIG: &[u8] = b"\x89PNG\r\n\x1a\n";
    if !bytes.starts_with(SIG) {
        return Err(RecorderError::InvalidImage("missing PNG signature".into()));
    }
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map(|_| ())
        .map_err(|e| RecorderError::InvalidImage(e.to_string()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(bytes))
}

impl Session {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn scenario(&self) -> ScenarioConfig {
        self.scenario.read().expect("scenario poisoned").clone()
    }

    /// Replaces the active scenario and records the switch.
    pub fn set_scenario(&self, scenario: &ScenarioConfig, note: Option<String>) -> Result<SessionEvent, RecorderError> {
        let config = serde_json::to_value(scenario).map_err(|e| RecorderError::InvalidPayload(e.to_string()))?;
        let event = NewEvent::new(
            EventKind::Scenario,
            json!({"action": "load", "name": scenario.name, "config": config}),
        )
        .with_note(note);
        self.record_with(event, |_, _| {
            *self.scenario.write().expect("scenario poisoned") = scenario.clone();
            Ok(())
        })
    }

    /// Called after every recorded event, outside the writer lock.
    pub fn set_observer(&self, f: impl Fn(&SessionEvent) + Send + Sync + 'static) {
        *self.observer.write().expect("observer poisoned") = Some(Box::new(f));
    }

    pub fn is_closed(&self) -> bool {
        self.writer.lock().expect("writer poisoned").closed
    }

    pub fn close(&self) -> Result<(), RecorderError> {
        let mut w = self.writer.lock().expect("writer poisoned");
        if !w.closed {
            w.closed = true;
            w.events.sync_all()?;
            w.commands.sync_all()?;
        }
        Ok(())
    }

    /// Number of events recorded so far.
    pub fn len(&self) -> u64 {
        self.writer.lock().expect("writer poisoned").next_seq - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record(&self, event: NewEvent) -> Result<SessionEvent, RecorderError> {
        self.record_with(event, |_, _| Ok(()))
    }

    /// Assigns seq and timestamp, lets `side_effect` write seq-named
    /// artifacts and patch the payload, then appends the event line. If the
    /// side effect fails nothing is appended and the seq is not consumed.
    fn record_with(
        &self,
        mut event: NewEvent,
        side_effect: impl FnOnce(u64, &mut Map<String, Value>) -> Result<(), RecorderError>,
    ) -> Result<SessionEvent, RecorderError> {
        event.check_schema()?;
        let recorded = {
            let mut w = self.writer.lock().expect("writer poisoned");
            if w.closed {
                return Err(RecorderError::SessionClosed);
            }
            let seq = w.next_seq;
            let timestamp = self.clock.now_ms().max(w.last_timestamp);
            side_effect(seq, &mut event.payload)?;
            let recorded = SessionEvent {
                seq,
                timestamp,
                kind: event.kind,
                payload: event.payload,
                person_id: event.person_id,
                note: event.note,
            };
            let mut line = serde_json::to_string(&recorded).map_err(|e| RecorderError::InvalidPayload(e.to_string()))?;
            line.push('\n');
            let command_line = match recorded.kind {
                EventKind::Teleop => Some(format!(
                    "{timestamp} TELEOP {} {:?}\n",
                    recorded.payload["command"].as_str().unwrap_or("?"),
                    recorded.payload["scale"].as_f64().unwrap_or(f64::NAN)
                )),
                EventKind::Tts => Some(format!(
                    "{timestamp} TTS {}\n",
                    log_text(recorded.payload["text"].as_str().unwrap_or(""))
                )),
                _ => None,
            };
            if let Some(cl) = command_line {
                w.commands.write_all(cl.as_bytes())?;
                w.commands.sync_data()?;
            }
            w.events.write_all(line.as_bytes())?;
            w.events.sync_data()?;
            w.next_seq += 1;
            w.last_timestamp = timestamp;
            recorded
        };
        if let Some(obs) = self.observer.read().expect("observer poisoned").as_ref() {
            obs(&recorded);
        }
        Ok(recorded)
    }

    /// Stores a PNG under `snapshots/<seq>.png` and records a snapshot event.
    pub fn record_snapshot(
        &self,
        png: &[u8],
        person_id: Option<u64>,
        note: Option<String>,
    ) -> Result<(PathBuf, SessionEvent), RecorderError> {
        if !self.scenario().feature_enabled(Feature::PhotoCapture) {
            return Err(RecorderError::DisabledByScenario(Feature::PhotoCapture));
        }
        is_png(png)?;
        let event = NewEvent::new(EventKind::Snapshot, json!({"file": Value::Null, "sha256": sha256_hex(png)}))
            .with_person(person_id)
            .with_note(note);
        let recorded = self.record_with(event, |seq, payload| {
            let rel = format!("snapshots/{seq}.png");
            write_durable(&self.dir.join(&rel), png)?;
            payload.insert("file".into(), Value::String(rel));
            Ok(())
        })?;
        Ok((self.artifact_path(&recorded), recorded))
    }

    /// Writes the exchange to `llm/<seq>.json` (and any image to
    /// `llm/<seq>.png`) and records an llm event.
    pub fn record_llm(&self, exchange: &ChatExchange, image: Option<&[u8]>) -> Result<(PathBuf, SessionEvent), RecorderError> {
        let body = serde_json::to_vec_pretty(exchange).map_err(|e| RecorderError::InvalidPayload(e.to_string()))?;
        let mut event = NewEvent::new(
            EventKind::Llm,
            json!({
                "exchange_id": exchange.exchange_id,
                "provider": exchange.provider,
                "model": exchange.model,
                "file": Value::Null,
                "ok": exchange.response.is_some(),
            }),
        )
        .with_person(exchange.person_id)
        .with_note(exchange.note.clone());
        if let Some(img) = &exchange.image {
            event.payload.insert("image".into(), Value::String(img.clone()));
        }
        let recorded = self.record_with(event, |seq, payload| {
            if let Some(img) = image {
                write_durable(&self.dir.join(format!("llm/{seq}.png")), img)?;
            }
            let rel = format!("llm/{seq}.json");
            write_durable(&self.dir.join(&rel), &body)?;
            payload.insert("file".into(), Value::String(rel));
            Ok(())
        })?;
        Ok((self.artifact_path(&recorded), recorded))
    }

    fn artifact_path(&self, event: &SessionEvent) -> PathBuf {
        self.dir.join(event.payload["file"].as_str().unwrap_or_default())
    }
}

impl InteractionLog for Session {
    fn log_exchange(&self, exchange: &ChatExchange, image: Option<&[u8]>) -> Result<u64, String> {
        self.record_llm(exchange, image).map(|(_, e)| e.seq).map_err(|e| e.to_string())
    }

    fn log_role(&self, role: &str) -> Result<u64, String> {
        self.record(NewEvent::new(EventKind::Scenario, json!({"action": "set_role", "role": role})))
            .map(|e| e.seq)
            .map_err(|e| e.to_string())
    }

    fn log_speech(&self, text: &str, attribution: &Attribution) -> Result<u64, String> {
        self.record(NewEvent::tts(text).attributed(attribution))
            .map(|e| e.seq)
            .map_err(|e| e.to_string())
    }

    fn log_transcript(&self, text: &str, audio_len: usize, attribution: &Attribution) -> Result<u64, String> {
        self.record(NewEvent::stt(text, audio_len).attributed(attribution))
            .map(|e| e.seq)
            .map_err(|e| e.to_string())
    }
}

fn write_durable(path: &Path, bytes: &[u8]) -> Result<(), RecorderError> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

/// Reads `events.jsonl` back. Fails on the first line that does not parse or
/// breaks seq/timestamp ordering.
pub fn replay(dir: &Path) -> Result<Vec<SessionEvent>, RecorderError> {
    let text = fs::read_to_string(dir.join(EVENTS_FILE))?;
    let mut out: Vec<SessionEvent> = Vec::new();
    let corrupt = |line: usize, reason: String| RecorderError::CorruptSession { line, reason };
    let mut lines: Vec<&str> = text.split('\n').collect();
    let complete = lines.pop().is_some_and(|last| last.is_empty());
    if !complete {
        return Err(corrupt(lines.len() + 1, "unterminated last line".into()));
    }
    for (i, raw) in lines.into_iter().enumerate() {
        let line = i + 1;
        let ev: SessionEvent = serde_json::from_str(raw).map_err(|e| corrupt(line, e.to_string()))?;
        let expected = out.last().map_or(1, |p| p.seq + 1);
        if ev.seq != expected {
            return Err(corrupt(line, format!("seq {} where {expected} was expected", ev.seq)));
        }
        if out.last().is_some_and(|p| ev.timestamp < p.timestamp) {
            return Err(corrupt(line, "timestamp went backwards".into()));
        }
        out.push(ev);
    }
    Ok(out)
}

/// Inverse of [`replay`]: the exact bytes of `events.jsonl`.
pub fn serialize_events(events: &[SessionEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events always serialize"));
        out.push('\n');
    }
    out
}

pub fn filter_events(
    events: &[SessionEvent],
    kind: Option<EventKind>,
    person: Option<u64>,
) -> impl Iterator<Item = &SessionEvent> {
    events
        .iter()
        .filter(move |e| kind.is_none_or(|k| e.kind == k) && person.is_none_or(|p| e.concerns(p)))
}
