//! HTTP model backends: Ollama's chat API for local models and Gemini's
//! generateContent for cloud models.

use std::sync::Arc;

use async_trait::async_trait;
use base64::Engine;
use caris_core::conversation::{LlmProvider, MockProvider, ProviderError, ProviderKind, ProviderRequest, ProviderSpec, Speaker};
use serde_json::{json, Value};

const OLLAMA_DEFAULT: &str = "http://127.0.0.1:11434";
const GEMINI_DEFAULT: &str = "https://generativelanguage.googleapis.com/v1beta";

pub fn build_provider(spec: &ProviderSpec, http: &reqwest::Client) -> Arc<dyn LlmProvider> {
    match spec.kind {
        ProviderKind::Mock => Arc::new(MockProvider::new()),
        ProviderKind::Local => Arc::new(OllamaProvider {
            endpoint: spec.endpoint.clone().unwrap_or_else(|| OLLAMA_DEFAULT.into()),
            http: http.clone(),
        }),
        ProviderKind::Cloud => Arc::new(GeminiProvider {
            endpoint: spec.endpoint.clone().unwrap_or_else(|| GEMINI_DEFAULT.into()),
            api_key_env: spec.api_key_env.clone().unwrap_or_else(|| "GEMINI_API_KEY".into()),
            http: http.clone(),
        }),
    }
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn unavailable(e: impl std::fmt::Display) -> ProviderError {
    ProviderError::Unavailable(e.to_string())
}

async fn post_json(req: reqwest::RequestBuilder, body: &Value) -> Result<Value, ProviderError> {
    let resp = req.json(body).send().await.map_err(unavailable)?;
    let status = resp.status();
    let text = resp.text().await.map_err(unavailable)?;
    if !status.is_success() {
        return Err(unavailable(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
    }
    serde_json::from_str(&text).map_err(unavailable)
}

pub struct OllamaProvider {
    pub endpoint: String,
    pub http: reqwest::Client,
}

impl OllamaProvider {
    pub fn request_body(request: &ProviderRequest) -> Value {
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        let last = request.messages.len().saturating_sub(1);
        for (i, m) in request.messages.iter().enumerate() {
            let role = match m.speaker {
                Speaker::Model => "assistant",
                Speaker::Wizard | Speaker::User => "user",
            };
            let mut msg = json!({"role": role, "content": m.text});
            if let (true, Some(img)) = (i == last, &request.image) {
                msg["images"] = json!([b64(img)]);
            }
            messages.push(msg);
        }
        json!({"model": request.model, "messages": messages, "stream": false})
    }
}

#[async_trait]
impl LlmProvider for OllamaProvider {
    async fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let url = format!("{}/api/chat", self.endpoint.trim_end_matches('/'));
        let v = post_json(self.http.post(url), &Self::request_body(request)).await?;
        v["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| unavailable("response without message.content"))
    }
}

pub struct GeminiProvider {
    pub endpoint: String,
    pub api_key_env: String,
    pub http: reqwest::Client,
}

impl GeminiProvider {
    pub fn request_body(request: &ProviderRequest) -> Value {
        let last = request.messages.len().saturating_sub(1);
        let contents: Vec<Value> = request
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let role = if m.speaker == Speaker::Model { "model" } else { "user" };
                let mut parts = vec![json!({"text": m.text})];
                if let (true, Some(img)) = (i == last, &request.image) {
                    parts.push(json!({"inline_data": {"mime_type": "image/png", "data": b64(img)}}));
                }
                json!({"role": role, "parts": parts})
            })
            .collect();
        let mut body = json!({ "contents": contents });
        if !request.system.is_empty() {
            body["systemInstruction"] = json!({"parts": [{"text": request.system}]});
        }
        body
    }
}

#[async_trait]
impl LlmProvider for GeminiProvider {
    async fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| unavailable(format!("environment variable {} is not set", self.api_key_env)))?;
        let url = format!(
            "{}/models/{}:generateContent",
            self.endpoint.trim_end_matches('/'),
            request.model
        );
        let v = post_json(self.http.post(url).header("x-goog-api-key", key), &Self::request_body(request)).await?;
        let parts = v["candidates"][0]["content"]["parts"]
            .as_array()
            .ok_or_else(|| unavailable("response without candidates"))?;
        Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join(""))
    }
}
