//! Per-context configuration: enabled features, quick phrases, templates,
//! role, model providers and teleop limits.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversation::{ProviderSpec, Template};
use crate::protocol::TeleopLimits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    PhotoCapture,
    Stt,
    Tts,
    Llm,
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feature::PhotoCapture => "photo capture",
            Feature::Stt => "speech-to-text",
            Feature::Tts => "text-to-speech",
            Feature::Llm => "LLM prompting",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    pub photo_capture: bool,
    pub stt: bool,
    pub tts: bool,
    pub llm: bool,
}

impl Features {
    pub fn all() -> Self {
        Self {
            photo_capture: true,
            stt: true,
            tts: true,
            llm: true,
        }
    }

    pub fn enabled(&self, feature: Feature) -> bool {
        match feature {
            Feature::PhotoCapture => self.photo_capture,
            Feature::Stt => self.stt,
            Feature::Tts => self.tts,
            Feature::Llm => self.llm,
        }
    }
}

impl Default for Features {
    fn default() -> Self {
        Self::all()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuickPhrase {
    pub text: String,
    /// Lowercase keywords; a phrase is suggested first when one appears in the transcript.
    #[serde(default)]
    pub triggers: Vec<String>,
}

fn default_history_window() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub enabled_features: Features,
    #[serde(default)]
    pub quick_phrases: Vec<QuickPhrase>,
    #[serde(default)]
    pub templates: Vec<Template>,
    #[serde(default)]
    pub default_role: String,
    /// Name of the provider in `providers` used by default.
    pub provider: String,
    pub providers: Vec<ProviderSpec>,
    #[serde(default)]
    pub teleop: TeleopLimits,
    #[serde(default = "default_history_window")]
    pub history_window: usize,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.name.trim().is_empty() {
            return bad("name is empty".into());
        }
        // Used as a directory component by the recorder.
        if !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad(format!("name {:?} must be [A-Za-z0-9_-]", self.name));
        }
        let f = self.enabled_features;
        if !(f.stt || f.tts || f.llm) {
            return bad("at least one of stt, tts, llm must be enabled".into());
        }
        let mut names = BTreeSet::new();
        for p in &self.providers {
            if !names.insert(p.name.as_str()) {
                return bad(format!("duplicate provider {:?}", p.name));
            }
        }
        if !names.contains(self.provider.as_str()) {
            return bad(format!("provider {:?} is not declared", self.provider));
        }
        let mut ids = BTreeSet::new();
        for t in &self.templates {
            if !ids.insert(t.template_id.as_str()) {
                return bad(format!("duplicate template {:?}", t.template_id));
            }
        }
        for q in &self.quick_phrases {
            if q.text.trim().is_empty() {
                return bad("empty quick phrase".into());
            }
        }
        let t = self.teleop;
        if !(t.max_linear.is_finite() && t.max_linear > 0.0 && t.max_angular.is_finite() && t.max_angular > 0.0) {
            return bad("teleop limits must be positive".into());
        }
        if self.history_window == 0 {
            return bad("history_window must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn template(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.template_id == id)
    }

    pub fn provider_spec(&self, name: &str) -> Option<&ProviderSpec> {
        self.providers.iter().find(|p| p.name == name)
    }

    pub fn feature_enabled(&self, feature: Feature) -> bool {
        self.enabled_features.enabled(feature)
    }
}
