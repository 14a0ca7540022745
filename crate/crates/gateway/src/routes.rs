use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use caris_bridge::BridgeError;
use caris_core::conversation::{suggest_prompts, suggest_prompts_with_model, Attribution, CompletionRequest, DEFAULT_MAX_SUGGESTIONS};
use caris_core::protocol::{teleop_to_twist, TeleopCommand};
use caris_core::recorder::{filter_events, replay, EventKind, NewEvent};
use caris_core::scenario::{Feature, ScenarioConfig};
use caris_core::tracker::{DetectionBatch, PersonId, TrackerEvent};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{parse_json, ApiError};
use crate::video::{self, BOUNDARY};
use crate::{CameraFrame, Gateway};

type AppState = State<Arc<Gateway>>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/teleop", post(teleop))
        .route("/state", get(state_ws))
        .route("/state/latest", get(state_latest))
        .route("/video", get(video_stream))
        .route("/video/frame.jpg", get(video_frame))
        .route("/frames", post(frames))
        .route("/detections", post(detections))
        .route("/persons", get(persons))
        .route("/persons/group", post(group_persons))
        .route("/persons/{id}/rename", post(rename_person))
        .route("/persons/{id}/history", get(person_history))
        .route("/snapshot", post(snapshot))
        .route("/llm/complete", post(llm_complete))
        .route("/llm/role", post(llm_role))
        .route("/llm/providers", get(llm_providers))
        .route("/speak", post(speak))
        .route("/transcribe", post(transcribe))
        .route("/scenario", get(get_scenario).put(put_scenario))
        .route("/scenario/suggestions", get(suggestions))
        .route("/map.png", get(map_png))
        .with_state(gateway)
}

async fn index() -> Html<&'static str> {
    Html(include_str!("index.html"))
}

fn note_of(v: &Value) -> Option<String> {
    v.get("note").and_then(Value::as_str).map(str::to_string).filter(|s| !s.is_empty())
}

fn bridge_error(e: BridgeError) -> ApiError {
    match e {
        BridgeError::Protocol(p) => ApiError::BadRequest(p.to_string()),
        other => ApiError::Unavailable(other.to_string()),
    }
}

async fn require_person(g: &Gateway, id: Option<PersonId>) -> ApiResult<()> {
    if let Some(id) = id {
        if g.tracker().await.registry().get(id).is_none() {
            return Err(ApiError::NotFound(format!("unknown person {id}")));
        }
    }
    Ok(())
}

async fn teleop(State(g): AppState, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let raw: Value = parse_json(&body)?;
    let cmd: TeleopCommand = serde_json::from_value(raw.clone()).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    cmd.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let twist = teleop_to_twist(cmd, g.scenario().teleop);
    g.robot.publish_twist(twist).await.map_err(bridge_error)?;
    let ev = g.session.record(NewEvent::teleop(&cmd, twist).with_note(note_of(&raw)))?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"seq": ev.seq, "linear": twist.linear, "angular": twist.angular})),
    ))
}

async fn state_latest(State(g): AppState) -> Json<crate::StateFrame> {
    Json(g.state_frames().borrow().clone())
}

async fn state_ws(State(g): AppState, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream_state(g, socket))
}

async fn stream_state(g: Arc<Gateway>, mut socket: WebSocket) {
    let mut frames = g.state_frames();
    loop {
        let text = serde_json::to_string(&*frames.borrow_and_update()).expect("state frames serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return;
        }
        tokio::select! {
            changed = frames.changed() => if changed.is_err() { return },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                _ => {}
            },
        }
    }
}

fn current_jpeg(g: &Gateway) -> (Vec<u8>, usize) {
    let views = g.views();
    let img = video::composite(g.camera_image().as_ref(), &views);
    (video::encode_jpeg(&img), views.len())
}

async fn video_frame(State(g): AppState) -> Response {
    let (jpeg, n) = current_jpeg(&g);
    (
        [(header::CONTENT_TYPE, "image/jpeg".to_string()), (header::HeaderName::from_static("x-caris-overlays"), n.to_string())],
        jpeg,
    )
        .into_response()
}

async fn video_stream(State(g): AppState) -> Response {
    let period = Duration::from_secs_f64(1.0 / g.config.video_rate_hz);
    let stream = futures_util::stream::unfold((g, None::<tokio::time::Interval>), move |(g, tick)| async move {
        let mut tick = tick.unwrap_or_else(|| tokio::time::interval(period));
        tick.tick().await;
        let (jpeg, n) = current_jpeg(&g);
        Some((Ok::<_, std::io::Error>(Bytes::from(video::mjpeg_part(&jpeg, n))), (g, Some(tick))))
    });
    Response::builder()
        .header(header::CONTENT_TYPE, format!("multipart/x-mixed-replace; boundary={BOUNDARY}"))
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("static response parts are valid")
}

#[derive(Deserialize)]
struct FrameQuery {
    frame_id: Option<u64>,
}

/// Camera frames are ingested without a session event; only snapshots are recorded.
async fn frames(State(g): AppState, Query(q): Query<FrameQuery>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let image = video::decode_jpeg(&body).map_err(|e| ApiError::BadRequest(format!("not a JPEG frame: {e}")))?;
    g.set_camera(CameraFrame {
        frame_id: q.frame_id,
        image,
    })?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "frame_id": q.frame_id }))))
}

async fn detections(State(g): AppState, body: Bytes) -> ApiResult<Json<Value>> {
    let batch: DetectionBatch = parse_json(&body)?;
    let snapshot = {
        let mut tracker = g.tracker().await;
        let snapshot = tracker.step(batch.frame_id, &batch.detections)?;
        g.set_views(snapshot.tracks.clone());
        if snapshot.events.iter().any(|e| matches!(e, TrackerEvent::Confirmed { .. })) {
            g.persist_registry(&tracker);
        }
        snapshot
    };
    let mut confirmed = Vec::new();
    let mut deleted = Vec::new();
    let mut persons = Vec::new();
    for e in &snapshot.events {
        match e {
            TrackerEvent::Confirmed {
                track_id,
                person_id,
                reidentified,
            } => {
                confirmed.push(json!({"track_id": track_id, "person_id": person_id, "reidentified": reidentified}));
                persons.push(*person_id);
            }
            TrackerEvent::Deleted { track_id } => deleted.push(*track_id),
        }
    }
    let ev = g.session.record(NewEvent::new(
        EventKind::Track,
        json!({
            "frame_id": batch.frame_id,
            "detections": batch.detections.len(),
            "confirmed": confirmed,
            "deleted": deleted,
            "persons": persons,
        }),
    ))?;
    Ok(Json(json!({
        "seq": ev.seq,
        "frame_id": snapshot.frame_id,
        "tracks": snapshot.tracks,
        "events": snapshot.events,
    })))
}

async fn persons(State(g): AppState) -> Json<Value> {
    let tracker = g.tracker().await;
    let list: Vec<Value> = tracker
        .registry()
        .persons()
        .map(|p| {
            json!({
                "person_id": p.person_id,
                "label": p.label,
                "group": p.group,
                "linked_tracks": p.linked_tracks,
                "history": p.history,
            })
        })
        .collect();
    Json(Value::Array(list))
}

#[derive(Deserialize)]
struct RenameRequest {
    label: String,
    #[serde(default)]
    note: Option<String>,
}

async fn rename_person(State(g): AppState, Path(id): Path<PersonId>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: RenameRequest = parse_json(&body)?;
    let label = req.label.trim().to_string();
    {
        let mut tracker = g.tracker().await;
        tracker.label_person(id, &label)?;
        g.refresh_views(&tracker);
        g.persist_registry(&tracker);
    }
    let ev = g.session.record(
        NewEvent::new(EventKind::Registry, json!({"action": "rename", "label": label}))
            .with_person(Some(id))
            .with_note(req.note),
    )?;
    Ok(Json(json!({"seq": ev.seq, "person_id": id, "label": label})))
}

#[derive(Deserialize)]
struct GroupRequest {
    person_ids: Vec<PersonId>,
    group: Option<String>,
    #[serde(default)]
    note: Option<String>,
}

async fn group_persons(State(g): AppState, body: Bytes) -> ApiResult<Json<Value>> {
    let req: GroupRequest = parse_json(&body)?;
    if req.person_ids.is_empty() {
        return Err(ApiError::BadRequest("person_ids is empty".into()));
    }
    let group = req.group.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
    {
        let mut tracker = g.tracker().await;
        tracker.group_persons(&req.person_ids, group.as_deref())?;
        g.refresh_views(&tracker);
        g.persist_registry(&tracker);
    }
    let ev = g.session.record(
        NewEvent::new(
            EventKind::Registry,
            json!({"action": "group", "group": group, "persons": req.person_ids}),
        )
        .with_note(req.note),
    )?;
    Ok(Json(json!({"seq": ev.seq, "group": group, "person_ids": req.person_ids})))
}

async fn person_history(State(g): AppState, Path(id): Path<PersonId>) -> ApiResult<Json<Value>> {
    let seqs = g.tracker().await.person_history(id)?.to_vec();
    let events = replay(g.session.dir())?;
    let events: Vec<_> = filter_events(&events, None, Some(id)).filter(|e| seqs.contains(&e.seq)).collect();
    Ok(Json(json!({"person_id": id, "seqs": seqs, "events": events})))
}

#[derive(Deserialize, Default)]
struct SnapshotRequest {
    #[serde(default)]
    person_id: Option<PersonId>,
    #[serde(default)]
    note: Option<String>,
    /// PNG to store instead of the latest camera frame.
    #[serde(default)]
    image_base64: Option<String>,
}

fn decode_b64(s: &str) -> ApiResult<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(|e| ApiError::BadRequest(format!("bad base64: {e}")))
}

async fn snapshot(State(g): AppState, body: Bytes) -> ApiResult<Json<Value>> {
    let req: SnapshotRequest = if body.is_empty() { SnapshotRequest::default() } else { parse_json(&body)? };
    if !g.scenario().feature_enabled(Feature::PhotoCapture) {
        return Err(ApiError::Forbidden("photo capture is disabled by the active scenario".into()));
    }
    require_person(&g, req.person_id).await?;
    let png = match &req.image_base64 {
        Some(b) => decode_b64(b)?,
        None => video::encode_png(
            &g.camera_image()
                .ok_or_else(|| ApiError::Conflict("no camera frame received yet".into()))?,
        ),
    };
    let (path, ev) = g.session.record_snapshot(&png, req.person_id, req.note)?;
    let rel = path.strip_prefix(g.session.dir()).unwrap_or(&path).to_string_lossy().to_string();
    Ok(Json(json!({"seq": ev.seq, "file": rel})))
}

#[derive(Deserialize)]
struct CompleteRequest {
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    template_id: Option<String>,
    #[serde(default)]
    vars: BTreeMap<String, String>,
    #[serde(default)]
    provider: Option<String>,
    #[serde(default)]
    image_base64: Option<String>,
    /// Attach the latest camera frame.
    #[serde(default)]
    attach_frame: bool,
    #[serde(default)]
    person_id: Option<PersonId>,
    #[serde(default)]
    note: Option<String>,
}

async fn llm_complete(State(g): AppState, body: Bytes) -> ApiResult<Json<Value>> {
    let req: CompleteRequest = parse_json(&body)?;
    let scenario = g.scenario();
    let prompt = match (&req.template_id, req.prompt) {
        (Some(id), _) => {
            let t = scenario
                .template(id)
                .ok_or_else(|| ApiError::NotFound(format!("unknown template {id:?}")))?;
            t.render(&req.vars).map_err(|e| ApiError::BadRequest(e.to_string()))?
        }
        (None, Some(p)) => p,
        (None, None) => String::new(),
    };
    require_person(&g, req.person_id).await?;
    let image = match (req.image_base64, req.attach_frame) {
        (Some(b), _) => Some(decode_b64(&b)?),
        (None, true) => {
            if !scenario.feature_enabled(Feature::PhotoCapture) {
                return Err(ApiError::Forbidden("photo capture is disabled by the active scenario".into()));
            }
            let frame = g
                .camera_image()
                .ok_or_else(|| ApiError::Conflict("no camera frame received yet".into()))?;
            Some(video::encode_png(&frame))
        }
        (None, false) => None,
    };
    let exchange = g
        .conversation
        .complete(CompletionRequest {
            provider: req.provider,
            prompt,
            image,
            attribution: Attribution {
                person_id: req.person_id,
                note: req.note,
            },
        })
        .await?;
    Ok(Json(json!({
        "exchange_id": exchange.exchange_id,
        "provider": exchange.provider,
        "model": exchange.model,
        "response": exchange.response,
        "latency_ms": exchange.latency_ms,
    })))
}

#[derive(Deserialize)]
struct RoleRequest {
    role: String,
}

async fn llm_role(State(g): AppState, body: Bytes) -> ApiResult<Json<Value>> {
    let req: RoleRequest = parse_json(&body)?;
    let seq = g.conversation.set_role(&req.role)?;
    Ok(Json(json!({"seq": seq, "role": req.role})))
}

async fn llm_providers(State(g): AppState) -> Json<Value> {
    Json(json!({
        "active": g.conversation.active_provider(),
        "providers": g.conversation.provider_specs(),
    }))
}

#[derive(Deserialize)]
struct SpeakRequest {
    text: String,
    #[serde(default)]
    person_id: Option<PersonId>,
    #[serde(default)]
    note: Option<String>,
}

async fn speak(State(g): AppState, body: Bytes) -> ApiResult<Json<Value>> {
    let req: SpeakRequest = parse_json(&body)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::BadRequest("text is empty".into()));
    }
    require_person(&g, req.person_id).await?;
    let attribution = Attribution {
        person_id: req.person_id,
        note: req.note,
    };
    let seq = g.conversation.speak(&req.text, &attribution).await?;
    g.set_utterance(&req.text);
    Ok(Json(json!({"seq": seq, "text": req.text})))
}

#[derive(Deserialize)]
struct TranscribeQuery {
    person_id: Option<PersonId>,
    note: Option<String>,
}

async fn transcribe(State(g): AppState, Query(q): Query<TranscribeQuery>, body: Bytes) -> ApiResult<Json<Value>> {
    require_person(&g, q.person_id).await?;
    let attribution = Attribution {
        person_id: q.person_id,
        note: q.note,
    };
    let (text, seq) = g.conversation.transcribe(&body, &attribution).await?;
    g.set_utterance(&text);
    Ok(Json(json!({"seq": seq, "text": text})))
}

async fn get_scenario(State(g): AppState) -> Json<ScenarioConfig> {
    Json(g.scenario())
}

async fn put_scenario(State(g): AppState, body: Bytes) -> ApiResult<Json<Value>> {
    let raw: Value = parse_json(&body)?;
    let note = note_of(&raw);
    let scenario: ScenarioConfig = serde_json::from_value(raw).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    scenario.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let ev = g.session.set_scenario(&scenario, note)?;
    g.configure_conversation(&scenario);
    Ok(Json(json!({"seq": ev.seq, "name": scenario.name})))
}

#[derive(Deserialize)]
struct SuggestQuery {
    #[serde(default)]
    max: Option<usize>,
    /// Append one model-generated suggestion from the active provider.
    #[serde(default)]
    model: bool,
}

async fn suggestions(State(g): AppState, Query(q): Query<SuggestQuery>) -> Json<Value> {
    let scenario = g.scenario();
    let transcript = g.conversation.recent_transcript();
    let max = q.max.unwrap_or(DEFAULT_MAX_SUGGESTIONS);
    let list = if q.model && scenario.enabled_features.llm {
        let active = g.conversation.active_provider();
        let spec = scenario.provider_spec(&active).cloned();
        let backend = match (&spec, g.config.provider_overrides.get(&active)) {
            (_, Some(b)) => Some(b.clone()),
            (Some(_), None) if g.config.mock_providers => {
                Some(Arc::new(caris_core::conversation::MockProvider::new()) as Arc<dyn caris_core::conversation::LlmProvider>)
            }
            (Some(s), None) => Some(crate::providers::build_provider(s, &g.http)),
            (None, None) => None,
        };
        match (backend, spec) {
            (Some(b), Some(s)) => suggest_prompts_with_model(&scenario, &transcript, max, b.as_ref(), &s.model).await,
            _ => suggest_prompts(&scenario, &transcript, max),
        }
    } else {
        suggest_prompts(&scenario, &transcript, max)
    };
    Json(json!({ "suggestions": list }))
}

async fn map_png(State(g): AppState) -> ApiResult<Response> {
    let png = g.robot.with_map(|m| m.grid.as_ref().map(|grid| grid.render_png()));
    match png {
        None => Err(ApiError::NotFound("no scan received yet".into())),
        Some(Err(e)) => Err(ApiError::Internal(e.to_string())),
        Some(Ok(bytes)) => Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response()),
    }
}
