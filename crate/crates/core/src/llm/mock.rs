//! Scripted, deterministic provider for offline runs and tests.
//!
//! A script is an ordered list of rules; the first rule whose matcher accepts
//! the current utterance (and whose template filter, if any, matches) wins.
//! When nothing matches, the provider echoes the first sentence of the first
//! context paragraph.

use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatTranscript, FinishReason, GenerationParams, Provider, ProviderError, ProviderResponse};
use crate::text::sentence_spans;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Prefix,
    Regex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatedFailure {
    Timeout,
    Transport,
}

/// One line of a mock script file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub match_kind: MatchKind,
    pub pattern: String,
    /// Only match transcripts rendered from this template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default)]
    pub response: String,
    #[serde(default = "default_finish")]
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<SimulatedFailure>,
}

fn default_finish() -> FinishReason {
    FinishReason::Stop
}

impl ScriptRule {
    pub fn exact(pattern: &str, response: &str) -> Self {
        Self {
            match_kind: MatchKind::Exact,
            pattern: pattern.into(),
            template: None,
            response: response.into(),
            finish_reason: FinishReason::Stop,
            error: None,
        }
    }

    pub fn for_template(mut self, template: &str) -> Self {
        self.template = Some(template.into());
        self
    }

    pub fn failing(mut self, failure: SimulatedFailure) -> Self {
        self.error = Some(failure);
        self
    }
}

/// A provider call as seen by the mock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub template_id: Option<String>,
    pub utterance: Option<String>,
    pub prompt: String,
}

struct CompiledRule {
    rule: ScriptRule,
    regex: Option<Regex>,
}

pub struct MockProvider {
    id: String,
    rules: Vec<CompiledRule>,
    calls: Mutex<Vec<CallRecord>>,
}

impl MockProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, ProviderError> {
        let rules = rules
            .into_iter()
            .map(|rule| {
                let regex = match rule.match_kind {
                    MatchKind::Regex => Some(
                        Regex::new(&rule.pattern)
                            .map_err(|e| ProviderError::Config(format!("bad regex {:?}: {e}", rule.pattern)))?,
                    ),
                    _ => None,
                };
                Ok(CompiledRule { rule, regex })
            })
            .collect::<Result<_, ProviderError>>()?;
        Ok(Self {
            id: "mock".to_string(),
            rules,
            calls: Mutex::new(Vec::new()),
        })
    }

    /// Parses a JSON Lines script. Blank lines and lines starting with `#`
    /// are skipped.
    pub fn from_jsonl(content: &str) -> Result<Self, ProviderError> {
        let mut rules = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            rules.push(
                serde_json::from_str(line)
                    .map_err(|e| ProviderError::Config(format!("mock script line {}: {e}", i + 1)))?,
            );
        }
        Self::new(rules)
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    pub fn clear_calls(&self) {
        self.calls.lock().expect("call log poisoned").clear();
    }

    fn find(&self, transcript: &ChatTranscript) -> Option<&ScriptRule> {
        let target = transcript
            .utterance
            .as_deref()
            .or_else(|| transcript.last_user_message())
            .unwrap_or_default()
            .trim();
        self.rules
            .iter()
            .filter(|c| match (&c.rule.template, &transcript.template_id) {
                (None, _) => true,
                (Some(want), Some(have)) => want == have,
                (Some(_), None) => false,
            })
            .find(|c| match c.rule.match_kind {
                MatchKind::Exact => target == c.rule.pattern,
                MatchKind::Prefix => target.starts_with(&c.rule.pattern),
                MatchKind::Regex => c.regex.as_ref().is_some_and(|r| r.is_match(target)),
            })
            .map(|c| &c.rule)
    }
}

/// First sentence of the first context paragraph, or empty.
pub fn first_paragraph_sentence(transcript: &ChatTranscript) -> String {
    transcript
        .paragraphs
        .first()
        .and_then(|p| sentence_spans(p).into_iter().next().map(|r| p[r].to_string()))
        .unwrap_or_default()
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete_once(&self, transcript: &ChatTranscript, _params: &GenerationParams) -> Result<ProviderResponse, ProviderError> {
        self.calls.lock().expect("call log poisoned").push(CallRecord {
            template_id: transcript.template_id.clone(),
            utterance: transcript.utterance.clone(),
            prompt: transcript.last_user_message().unwrap_or_default().to_string(),
        });
        let (text, finish_reason) = match self.find(transcript) {
            Some(rule) => {
                match rule.error {
                    Some(SimulatedFailure::Timeout) => return Err(ProviderError::Timeout { attempts: 1 }),
                    Some(SimulatedFailure::Transport) => {
                        return Err(ProviderError::Transport {
                            message: "simulated transport failure".into(),
                            retryable: false,
                            attempts: 1,
                        })
                    }
                    None => {}
                }
                (rule.response.clone(), rule.finish_reason)
            }
            None => {
                let echo = first_paragraph_sentence(transcript);
                let finish = if echo.is_empty() { FinishReason::Filtered } else { FinishReason::Stop };
                (echo, finish)
            }
        };
        Ok(ProviderResponse {
            text,
            finish_reason,
            latency_ms: 0,
            provider_id: self.id.clone(),
        })
    }
}
