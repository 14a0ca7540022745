//! Speech-to-text and text-to-speech adapter seams.

use async_trait::async_trait;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoiceError {
    #[error("speech adapter unavailable: {0}")]
    AdapterUnavailable(String),
}

#[async_trait]
pub trait Transcriber: Send + Sync {
    async fn transcribe(&self, audio: &[u8]) -> Result<String, VoiceError>;
}

#[async_trait]
pub trait SpeechSink: Send + Sync {
    async fn say(&self, text: &str) -> Result<(), VoiceError>;
}

/// Header of mock audio fixtures; the UTF-8 transcript follows it.
pub const FIXTURE_MAGIC: &[u8] = b"CARIS-STT-FIXTURE\n";

pub fn fixture_audio(text: &str) -> Vec<u8> {
    let mut v = FIXTURE_MAGIC.to_vec();
    v.extend_from_slice(text.as_bytes());
    v
}

/// Returns the transcript embedded in a fixture produced by [`fixture_audio`].
#[derive(Debug, Clone, Default)]
pub struct MockTranscriber;

#[async_trait]
impl Transcriber for MockTranscriber {
    async fn transcribe(&self, audio: &[u8]) -> Result<String, VoiceError> {
        let body = audio
            .strip_prefix(FIXTURE_MAGIC)
            .ok_or_else(|| VoiceError::AdapterUnavailable("mock transcriber only accepts fixture audio".into()))?;
        String::from_utf8(body.to_vec())
            .map_err(|_| VoiceError::AdapterUnavailable("fixture transcript is not UTF-8".into()))
    }
}

/// Collects spoken text in memory.
#[derive(Debug, Default)]
pub struct MemorySpeech {
    spoken: std::sync::Mutex<Vec<String>>,
}

impl MemorySpeech {
    pub fn spoken(&self) -> Vec<String> {
        self.spoken.lock().expect("speech log poisoned").clone()
    }
}

#[async_trait]
impl SpeechSink for MemorySpeech {
    async fn say(&self, text: &str) -> Result<(), VoiceError> {
        self.spoken.lock().expect("speech log poisoned").push(text.to_string());
        Ok(())
    }
}
