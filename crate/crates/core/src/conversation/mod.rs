//! Language interaction: LLM completions through pluggable providers, role
//! ("interaction style") management, templates, prompt suggestions and the
//! speech adapter seams.

pub mod provider;
pub mod suggest;
pub mod template;
pub mod voice;

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Clock;
use crate::scenario::{Feature, Features};

pub use provider::{LlmProvider, MockProvider, ProviderError, ProviderKind, ProviderRequest, ProviderSpec};
pub use suggest::{suggest_prompts, suggest_prompts_with_model, DEFAULT_MAX_SUGGESTIONS};
pub use template::{render_template, Template, TemplateError};
pub use voice::{MockTranscriber, SpeechSink, Transcriber, VoiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Wizard,
    User,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub speaker: Speaker,
    pub text: String,
}

impl ChatMessage {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Self {
            speaker,
            text: text.into(),
        }
    }
}

/// One LLM request/response as recorded in the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub exchange_id: u64,
    /// Milliseconds since session start.
    pub timestamp: u64,
    pub provider: String,
    pub model: String,
    pub role_prompt: String,
    pub messages: Vec<ChatMessage>,
    /// `sha256:<hex>` of the attached PNG.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ChatExchange {
    pub fn succeeded(&self) -> bool {
        self.response.is_some()
    }
}

/// Who an interaction concerns, plus an optional free-text annotation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    #[serde(default)]
    pub person_id: Option<u64>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConversationError {
    #[error("unknown provider {0:?}")]
    UnknownProvider(String),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("provider {0:?} does not accept images")]
    ImagesUnsupported(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("{0} is disabled by the active scenario")]
    DisabledByScenario(Feature),
    #[error("speech adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("could not record interaction: {0}")]
    Log(String),
}

/// Destination for everything the conversation module must leave in the session log.
pub trait InteractionLog: Send + Sync {
    fn log_exchange(&self, exchange: &ChatExchange, image: Option<&[u8]>) -> Result<u64, String>;
    fn log_role(&self, role: &str) -> Result<u64, String>;
    fn log_speech(&self, text: &str, attribution: &Attribution) -> Result<u64, String>;
    fn log_transcript(&self, text: &str, audio_len: usize, attribution: &Attribution) -> Result<u64, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    /// `None` selects the active provider.
    pub provider: Option<String>,
    pub prompt: String,
    pub image: Option<Vec<u8>>,
    pub attribution: Attribution,
}

impl CompletionRequest {
    pub fn text(prompt: impl Into<String>) -> Self {
        Self {
            provider: None,
            prompt: prompt.into(),
            image: None,
            attribution: Attribution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversationConfig {
    /// Messages of prior context sent with each request, including the new prompt.
    pub history_window: usize,
    pub timeout: Duration,
    pub transcript_len: usize,
}

impl Default for ConversationConfig {
    fn default() -> Self {
        Self {
            history_window: 20,
            timeout: Duration::from_secs(30),
            transcript_len: 20,
        }
    }
}

struct Registered {
    spec: ProviderSpec,
    backend: Arc<dyn LlmProvider>,
}

pub struct Conversation {
    config: ConversationConfig,
    clock: Arc<dyn Clock>,
    log: Arc<dyn InteractionLog>,
    providers: RwLock<BTreeMap<String, Registered>>,
    active: RwLock<String>,
    role: RwLock<String>,
    features: RwLock<Features>,
    history: tokio::sync::Mutex<Vec<ChatMessage>>,
    transcript: std::sync::Mutex<VecDeque<String>>,
    transcriber: RwLock<Option<Arc<dyn Transcriber>>>,
    speaker: RwLock<Option<Arc<dyn SpeechSink>>>,
    next_exchange: AtomicU64,
}

impl Conversation {
    pub fn new(config: ConversationConfig, clock: Arc<dyn Clock>, log: Arc<dyn InteractionLog>) -> Self {
        Self {
            config,
            clock,
            log,
            providers: RwLock::new(BTreeMap::new()),
            active: RwLock::new(String::new()),
            role: RwLock::new(String::new()),
            features: RwLock::new(Features::default()),
            history: tokio::sync::Mutex::new(Vec::new()),
            transcript: std::sync::Mutex::new(VecDeque::new()),
            transcriber: RwLock::new(None),
            speaker: RwLock::new(None),
            next_exchange: AtomicU64::new(1),
        }
    }

    pub fn register_provider(&self, spec: ProviderSpec, backend: Arc<dyn LlmProvider>) {
        let mut providers = self.providers.write().expect("provider table poisoned");
        providers.insert(spec.name.clone(), Registered { spec, backend });
    }

    pub fn clear_providers(&self) {
        self.providers.write().expect("provider table poisoned").clear();
    }

    pub fn provider_specs(&self) -> Vec<ProviderSpec> {
        self.providers
            .read()
            .expect("provider table poisoned")
            .values()
            .map(|r| r.spec.clone())
            .collect()
    }

    pub fn set_active_provider(&self, name: &str) -> Result<(), ConversationError> {
        if !self.providers.read().expect("provider table poisoned").contains_key(name) {
            return Err(ConversationError::UnknownProvider(name.to_string()));
        }
        *self.active.write().expect("active provider poisoned") = name.to_string();
        Ok(())
    }

    pub fn active_provider(&self) -> String {
        self.active.read().expect("active provider poisoned").clone()
    }

    pub fn set_features(&self, features: Features) {
        *self.features.write().expect("features poisoned") = features;
    }

    pub fn features(&self) -> Features {
        *self.features.read().expect("features poisoned")
    }

    pub fn set_transcriber(&self, t: Option<Arc<dyn Transcriber>>) {
        *self.transcriber.write().expect("transcriber poisoned") = t;
    }

    pub fn set_speaker(&self, s: Option<Arc<dyn SpeechSink>>) {
        *self.speaker.write().expect("speaker poisoned") = s;
    }

    pub fn role(&self) -> String {
        self.role.read().expect("role poisoned").clone()
    }

    /// Sets the standing role prompt for later completions; empty clears it.
    /// The change is logged.
    pub fn set_role(&self, role: &str) -> Result<u64, ConversationError> {
        *self.role.write().expect("role poisoned") = role.to_string();
        self.log.log_role(role).map_err(ConversationError::Log)
    }

    /// Sets the role without logging; for callers that record the change
    /// themselves as part of a larger event.
    pub fn replace_role(&self, role: &str) {
        *self.role.write().expect("role poisoned") = role.to_string();
    }

    pub fn recent_transcript(&self) -> Vec<String> {
        self.transcript.lock().expect("transcript poisoned").iter().cloned().collect()
    }

    fn remember(&self, line: String) {
        let mut t = self.transcript.lock().expect("transcript poisoned");
        t.push_back(line);
        while t.len() > self.config.transcript_len {
            t.pop_front();
        }
    }

    /// Sends a prompt to a provider. Every call, successful or not, logs
    /// exactly one exchange; failures carry `error` instead of `response`.
    pub async fn complete(&self, req: CompletionRequest) -> Result<ChatExchange, ConversationError> {
        let provider_name = req.provider.clone().unwrap_or_else(|| self.active_provider());
        let resolved = {
            let providers = self.providers.read().expect("provider table poisoned");
            providers
                .get(&provider_name)
                .map(|r| (r.spec.clone(), Arc::clone(&r.backend)))
        };
        let role = self.role();

        let mut history = self.history.lock().await;
        let keep = self.config.history_window.saturating_sub(1);
        let mut messages: Vec<ChatMessage> = history[history.len().saturating_sub(keep)..].to_vec();
        messages.push(ChatMessage::new(Speaker::Wizard, req.prompt.clone()));

        let mut exchange = ChatExchange {
            exchange_id: self.next_exchange.fetch_add(1, Ordering::SeqCst),
            timestamp: self.clock.now_ms(),
            provider: provider_name.clone(),
            model: resolved.as_ref().map(|(s, _)| s.model.clone()).unwrap_or_default(),
            role_prompt: role.clone(),
            messages: messages.clone(),
            image: req.image.as_ref().map(|img| format!("sha256:{}", hex::encode(Sha256::digest(img)))),
            response: None,
            error: None,
            latency_ms: 0,
            person_id: req.attribution.person_id,
            note: req.attribution.note.clone(),
        };

        let outcome = match resolved {
            _ if !self.features().llm => Err(ConversationError::DisabledByScenario(Feature::Llm)),
            None => Err(ConversationError::UnknownProvider(provider_name.clone())),
            Some(_) if req.prompt.trim().is_empty() => Err(ConversationError::EmptyPrompt),
            Some((spec, _)) if req.image.is_some() && !spec.supports_images => {
                Err(ConversationError::ImagesUnsupported(spec.name))
            }
            Some((spec, backend)) => {
                let request = ProviderRequest {
                    model: spec.model.clone(),
                    system: role,
                    messages,
                    image: req.image.clone(),
                };
                let started = Instant::now();
                let result = tokio::time::timeout(self.config.timeout, backend.complete(&request)).await;
                exchange.latency_ms = started.elapsed().as_millis() as u64;
                match result {
                    Ok(Ok(text)) => Ok(text),
                    Ok(Err(ProviderError::Unavailable(e))) => Err(ConversationError::ProviderUnavailable(e)),
                    Err(_) => Err(ConversationError::ProviderUnavailable(format!(
                        "no answer within {:?}",
                        self.config.timeout
                    ))),
                }
            }
        };

        match &outcome {
            Ok(text) => {
                exchange.response = Some(text.clone());
                history.push(ChatMessage::new(Speaker::Wizard, req.prompt.clone()));
                history.push(ChatMessage::new(Speaker::Model, text.clone()));
                self.remember(req.prompt.clone());
                self.remember(text.clone());
            }
            Err(e) => exchange.error = Some(e.to_string()),
        }
        drop(history);

        self.log
            .log_exchange(&exchange, req.image.as_deref())
            .map_err(ConversationError::Log)?;
        outcome.map(|_| exchange)
    }

    /// Speaks through the robot; one speech output and one logged event.
    pub async fn speak(&self, text: &str, attribution: &Attribution) -> Result<u64, ConversationError> {
        if !self.features().tts {
            return Err(ConversationError::DisabledByScenario(Feature::Tts));
        }
        let speaker = self
            .speaker
            .read()
            .expect("speaker poisoned")
            .clone()
            .ok_or_else(|| ConversationError::AdapterUnavailable("no speech output configured".into()))?;
        speaker
            .say(text)
            .await
            .map_err(|VoiceError::AdapterUnavailable(e)| ConversationError::AdapterUnavailable(e))?;
        self.remember(text.to_string());
        self.log.log_speech(text, attribution).map_err(ConversationError::Log)
    }

    /// Transcribes audio, logs it and adds it to the conversation as user speech.
    pub async fn transcribe(&self, audio: &[u8], attribution: &Attribution) -> Result<(String, u64), ConversationError> {
        if !self.features().stt {
            return Err(ConversationError::DisabledByScenario(Feature::Stt));
        }
        let transcriber = self
            .transcriber
            .read()
            .expect("transcriber poisoned")
            .clone()
            .ok_or_else(|| ConversationError::AdapterUnavailable("no transcriber configured".into()))?;
        let text = transcriber
            .transcribe(audio)
            .await
            .map_err(|VoiceError::AdapterUnavailable(e)| ConversationError::AdapterUnavailable(e))?;
        self.history.lock().await.push(ChatMessage::new(Speaker::User, text.clone()));
        self.remember(text.clone());
        let seq = self
            .log
            .log_transcript(&text, audio.len(), attribution)
            .map_err(ConversationError::Log)?;
        Ok((text, seq))
    }
}

#[cfg(test)]
mod tests {
    use super::voice::{fixture_audio, MemorySpeech};
    use super::*;
    use crate::clock::ManualClock;
    use std::sync::Mutex;

    #[derive(Default)]
    struct MemLog {
        exchanges: Mutex<Vec<ChatExchange>>,
        roles: Mutex<Vec<String>>,
        speech: Mutex<Vec<String>>,
        transcripts: Mutex<Vec<String>>,
    }

    impl InteractionLog for MemLog {
        fn log_exchange(&self, e: &ChatExchange, _: Option<&[u8]>) -> Result<u64, String> {
            let mut v = self.exchanges.lock().unwrap();
            v.push(e.clone());
            Ok(v.len() as u64)
        }
        fn log_role(&self, role: &str) -> Result<u64, String> {
            self.roles.lock().unwrap().push(role.into());
            Ok(0)
        }
        fn log_speech(&self, text: &str, _: &Attribution) -> Result<u64, String> {
            self.speech.lock().unwrap().push(text.into());
            Ok(0)
        }
        fn log_transcript(&self, text: &str, _: usize, _: &Attribution) -> Result<u64, String> {
            self.transcripts.lock().unwrap().push(text.into());
            Ok(0)
        }
    }

    fn setup() -> (Conversation, Arc<MemLog>) {
        let log = Arc::new(MemLog::default());
        let c = Conversation::new(ConversationConfig::default(), Arc::new(ManualClock::new()), log.clone());
        c.register_provider(ProviderSpec::mock("mock", true), Arc::new(MockProvider::new()));
        c.register_provider(
            ProviderSpec {
                name: "llama-3.1-8b".into(),
                kind: ProviderKind::Local,
                model: "llama3.1:8b".into(),
                supports_images: false,
                endpoint: None,
                api_key_env: None,
            },
            Arc::new(MockProvider::new()),
        );
        c.set_active_provider("mock").unwrap();
        c.set_features(Features::all());
        (c, log)
    }

    #[tokio::test]
    async fn mock_echo_and_role() {
        let (c, log) = setup();
        let ex = c.complete(CompletionRequest::text("ping")).await.unwrap();
        assert_eq!(ex.response.as_deref(), Some("echo:ping"));
        c.set_role("tour guide").unwrap();
        let ex = c.complete(CompletionRequest::text("ping")).await.unwrap();
        assert!(ex.response.unwrap().starts_with("role:tour guide"));
        assert_eq!(ex.role_prompt, "tour guide");
        // context carries the previous turn
        assert_eq!(ex.messages.len(), 3);
        c.set_role("").unwrap();
        c.set_role("museum docent").unwrap();
        assert_eq!(c.role(), "museum docent");
        assert_eq!(log.roles.lock().unwrap().len(), 3);
        assert_eq!(log.exchanges.lock().unwrap().len(), 2);
    }

    #[tokio::test]
    async fn failures_are_recorded_once() {
        let (c, log) = setup();
        let mut req = CompletionRequest::text("describe this");
        req.provider = Some("llama-3.1-8b".into());
        req.image = Some(vec![1, 2, 3]);
        assert_eq!(
            c.complete(req).await,
            Err(ConversationError::ImagesUnsupported("llama-3.1-8b".into()))
        );
        assert_eq!(c.complete(CompletionRequest::text("   ")).await, Err(ConversationError::EmptyPrompt));
        let mut req = CompletionRequest::text("x");
        req.provider = Some("nope".into());
        assert!(matches!(c.complete(req).await, Err(ConversationError::UnknownProvider(_))));
        let ex = log.exchanges.lock().unwrap().clone();
        assert_eq!(ex.len(), 3);
        assert!(ex.iter().all(|e| e.response.is_none() && e.error.is_some() && !e.messages.is_empty()));
        assert!(ex[0].image.as_ref().unwrap().starts_with("sha256:"));
    }

    #[tokio::test]
    async fn history_window_is_bounded() {
        let (c, _) = setup();
        let mut last = None;
        for i in 0..15 {
            last = Some(c.complete(CompletionRequest::text(format!("q{i}"))).await.unwrap());
        }
        assert_eq!(last.unwrap().messages.len(), 20);
    }

    #[tokio::test(start_paused = true)]
    async fn timeout_maps_to_unavailable() {
        let log = Arc::new(MemLog::default());
        let c = Conversation::new(ConversationConfig::default(), Arc::new(ManualClock::new()), log.clone());
        c.register_provider(ProviderSpec::mock("slow", false), Arc::new(MockProvider::stalling(Duration::from_secs(60))));
        c.set_active_provider("slow").unwrap();
        c.set_features(Features::all());
        let r = c.complete(CompletionRequest::text("hello")).await;
        assert!(matches!(r, Err(ConversationError::ProviderUnavailable(_))));
        assert_eq!(log.exchanges.lock().unwrap().len(), 1);
    }

    #[tokio::test]
    async fn speech_respects_features() {
        let (c, log) = setup();
        let speech = Arc::new(MemorySpeech::default());
        c.set_speaker(Some(speech.clone()));
        c.set_transcriber(Some(Arc::new(MockTranscriber)));
        c.speak("welcome", &Attribution::default()).await.unwrap();
        assert_eq!(speech.spoken(), vec!["welcome"]);
        assert_eq!(log.speech.lock().unwrap().clone(), vec!["welcome"]);
        let (text, _) = c.transcribe(&fixture_audio("where is the lab?"), &Attribution::default()).await.unwrap();
        assert_eq!(text, "where is the lab?");

        c.set_features(Features {
            tts: false,
            stt: false,
            ..Features::all()
        });
        assert_eq!(
            c.speak("hi", &Attribution::default()).await,
            Err(ConversationError::DisabledByScenario(Feature::Tts))
        );
        assert!(matches!(
            c.transcribe(&fixture_audio("x"), &Attribution::default()).await,
            Err(ConversationError::DisabledByScenario(Feature::Stt))
        ));
        assert_eq!(speech.spoken().len(), 1);
    }
}
