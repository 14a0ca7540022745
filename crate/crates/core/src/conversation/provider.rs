//! LLM provider seam and the deterministic mock.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ChatMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Cloud,
    Local,
    Mock,
}

/// Configuration entry for one model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub name: String,
    pub kind: ProviderKind,
    pub model: String,
    #[serde(default)]
    pub supports_images: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the credential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

impl ProviderSpec {
    pub fn mock(name: &str, supports_images: bool) -> Self {
        Self {
            name: name.to_string(),
            kind: ProviderKind::Mock,
            model: "mock".to_string(),
            supports_images,
            endpoint: None,
            api_key_env: None,
        }
    }
}

/// What a provider receives: the role prompt as the leading system message,
/// then the conversation window, optionally with one PNG image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderRequest {
    pub model: String,
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub image: Option<Vec<u8>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
}

#[async_trait]
pub trait LlmProvider: Send + Sync {
    async fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

/// Deterministic provider: `role:<role> echo:<last message>`, with the role
/// part omitted when no role is set.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    /// Delay before answering, to simulate a slow model.
    pub stall: Option<Duration>,
    pub fail: bool,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stalling(stall: Duration) -> Self {
        Self {
            stall: Some(stall),
            fail: false,
        }
    }

    pub fn failing() -> Self {
        Self {
            stall: None,
            fail: true,
        }
    }

    pub fn respond(request: &ProviderRequest) -> String {
        let last = request.messages.last().map(|m| m.text.as_str()).unwrap_or("");
        let mut out = String::new();
        if !request.system.is_empty() {
            out.push_str(&format!("role:{} ", request.system));
        }
        out.push_str(&format!("echo:{last}"));
        if let Some(img) = &request.image {
            out.push_str(&format!(" [image:{} bytes]", img.len()));
        }
        out
    }
}

#[async_trait]
impl LlmProvider for MockProvider {
    async fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        if let Some(d) = self.stall {
            tokio::time::sleep(d).await;
        }
        if self.fail {
            return Err(ProviderError::Unavailable("mock provider configured to fail".into()));
        }
        Ok(Self::respond(request))
    }
}
