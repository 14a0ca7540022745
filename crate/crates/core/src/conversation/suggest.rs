use crate::scenario::ScenarioConfig;

use super::provider::{LlmProvider, ProviderRequest};
use super::{ChatMessage, Speaker};

pub const DEFAULT_MAX_SUGGESTIONS: usize = 5;

/// Quick phrases whose trigger keywords occur in the recent transcript come
/// first, then the remaining phrases, both in configured order. Matching is
/// exact lowercase substring.
pub fn suggest_prompts(scenario: &ScenarioConfig, recent_transcript: &[String], max: usize) -> Vec<String> {
    let haystack = recent_transcript.join("\n").to_lowercase();
    let triggered = |p: &&crate::scenario::QuickPhrase| {
        p.triggers
            .iter()
            .map(|t| t.trim().to_lowercase())
            .any(|t| !t.is_empty() && haystack.contains(&t))
    };
    let (hit, rest): (Vec<_>, Vec<_>) = scenario.quick_phrases.iter().partition(|p| triggered(p));
    hit.into_iter()
        .chain(rest)
        .map(|p| p.text.clone())
        .take(max)
        .collect()
}

/// [`suggest_prompts`] plus one model-generated reply appended at the end.
/// The list still never exceeds `max`.
pub async fn suggest_prompts_with_model(
    scenario: &ScenarioConfig,
    recent_transcript: &[String],
    max: usize,
    provider: &dyn LlmProvider,
    model: &str,
) -> Vec<String> {
    if max == 0 {
        return Vec::new();
    }
    let mut out = suggest_prompts(scenario, recent_transcript, max);
    let request = ProviderRequest {
        model: model.to_string(),
        system: "Suggest one short reply the robot could say next. Answer with the reply only.".into(),
        messages: vec![ChatMessage {
            speaker: Speaker::User,
            text: recent_transcript.join("\n"),
        }],
        image: None,
    };
    if let Ok(reply) = provider.complete(&request).await {
        let reply = reply.trim().to_string();
        if !reply.is_empty() && !out.contains(&reply) {
            out.truncate(max - 1);
            out.push(reply);
        }
    }
    out
}
