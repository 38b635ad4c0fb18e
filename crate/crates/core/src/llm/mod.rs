//! Text-generation providers behind one contract, plus the prompt template
//! store.
//!
//! A [`ChatTranscript`] carries the rendered prompt together with the
//! dialogue history and the current utterance it was rendered from; remote
//! providers only see the messages, offline providers may use the rest.

mod mock;
mod remote;
pub mod template;

use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{CallRecord, MatchKind, MockProvider, ScriptRule, SimulatedFailure};
pub use remote::{RemoteChatProvider, RemoteConfig};
pub use template::{PromptTemplate, TemplateError, TemplateStore};

pub const DEFAULT_MAX_TOKENS: u32 = 256;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("invalid transcript: {0}")]
    InvalidTranscript(String),
    #[error("provider timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("provider transport error after {attempts} attempt(s): {message}")]
    Transport {
        message: String,
        retryable: bool,
        attempts: u32,
    },
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Timeout { .. } => true,
            ProviderError::Transport { retryable, .. } => *retryable,
            _ => false,
        }
    }

    fn with_attempts(self, n: u32) -> Self {
        match self {
            ProviderError::Timeout { .. } => ProviderError::Timeout { attempts: n },
            ProviderError::Transport { message, retryable, .. } => ProviderError::Transport {
                message,
                retryable,
                attempts: n,
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub presence_penalty: f64,
    pub repetition_penalty: f64,
    pub max_tokens: u32,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidParams(format!("temperature {} < 0", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(ProviderError::InvalidParams(format!("top_p {} outside [0, 1]", self.top_p)));
        }
        if self.max_tokens < 1 {
            return Err(ProviderError::InvalidParams("max_tokens must be at least 1".into()));
        }
        if !self.presence_penalty.is_finite() || !self.repetition_penalty.is_finite() {
            return Err(ProviderError::InvalidParams("penalties must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    Reader,
    Generator,
    Orchestrator,
}

/// Sampling presets. The reader decodes deterministically; the generator
/// samples with nucleus and presence penalty; the orchestrator reuses the
/// reader settings so classification is reproducible.
pub fn preset(kind: PresetKind) -> GenerationParams {
    match kind {
        PresetKind::Reader | PresetKind::Orchestrator => GenerationParams {
            temperature: 0.0,
            top_p: 0.0,
            presence_penalty: 0.0,
            repetition_penalty: 1.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        },
        PresetKind::Generator => GenerationParams {
            temperature: 0.8,
            top_p: 0.4,
            presence_penalty: 0.6,
            repetition_penalty: 1.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// One user/system exchange of dialogue history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub user: String,
    pub system: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub messages: Vec<ChatMessage>,
    /// Template the prompt was rendered from.
    #[serde(default)]
    pub template_id: Option<String>,
    /// Current user utterance.
    #[serde(default)]
    pub utterance: Option<String>,
    #[serde(default)]
    pub history: Vec<Exchange>,
    /// Context paragraphs substituted into the prompt, best first.
    #[serde(default)]
    pub paragraphs: Vec<String>,
}

impl ChatTranscript {
    /// A transcript holding a single rendered prompt as the user message.
    pub fn prompt(template_id: &str, rendered: String) -> Self {
        Self {
            messages: vec![ChatMessage {
                role: Role::User,
                content: rendered,
            }],
            template_id: Some(template_id.to_string()),
            ..Default::default()
        }
    }

    pub fn with_context(mut self, utterance: &str, history: &[Exchange], paragraphs: Vec<String>) -> Self {
        self.utterance = Some(utterance.to_string());
        self.history = history.to_vec();
        self.paragraphs = paragraphs;
        self
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Non-empty; after leading system messages, roles alternate starting
    /// with the user.
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidTranscript("no messages".into()));
        }
        let mut expected = Role::User;
        for m in self.messages.iter().skip_while(|m| m.role == Role::System) {
            if m.role != expected {
                return Err(ProviderError::InvalidTranscript(format!(
                    "expected a {expected:?} message, found {:?}",
                    m.role
                )));
            }
            expected = if expected == Role::User { Role::Assistant } else { Role::User };
        }
        if expected == Role::User && self.messages.iter().all(|m| m.role == Role::System) {
            return Err(ProviderError::InvalidTranscript("only system messages".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Filtered,
    Error,
}

impl FromStr for FinishReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stop" => Ok(Self::Stop),
            "length" => Ok(Self::Length),
            "filtered" | "content_filter" => Ok(Self::Filtered),
            "error" => Ok(Self::Error),
            other => Err(format!("unknown finish reason {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub provider_id: String,
}

impl ProviderResponse {
    /// Usable text: non-empty and not filtered or errored.
    pub fn usable_text(&self) -> Option<&str> {
        let t = self.text.trim();
        (!t.is_empty() && matches!(self.finish_reason, FinishReason::Stop | FinishReason::Length)).then_some(t)
    }
}

/// A text-generation backend. Implementations must be reentrant.
pub trait Provider: Send + Sync {
    fn id(&self) -> &str;

    /// One attempt, no retries. Callers normally go through [`complete`].
    fn complete_once(&self, transcript: &ChatTranscript, params: &GenerationParams) -> Result<ProviderResponse, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_backoff_ms: 200,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self {
            base_backoff_ms: 0,
            ..Self::default()
        }
    }
}

/// Validates inputs, then calls the provider with bounded exponential
/// backoff on retryable failures.
pub fn complete(
    provider: &dyn Provider,
    transcript: &ChatTranscript,
    params: &GenerationParams,
    retry: &RetryPolicy,
) -> Result<ProviderResponse, ProviderError> {
    params.validate()?;
    transcript.validate()?;
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match provider.complete_once(transcript, params) {
            Ok(mut resp) => {
                if resp.text.trim().is_empty() && matches!(resp.finish_reason, FinishReason::Stop | FinishReason::Length) {
                    resp.finish_reason = FinishReason::Error;
                }
                return Ok(resp);
            }
            Err(e) if e.is_retryable() && attempt <= retry.max_retries => {
                tracing::debug!(provider = provider.id(), attempt, error = %e, "retrying provider call");
                let delay = retry.base_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                if delay > 0 {
                    std::thread::sleep(Duration::from_millis(delay));
                }
            }
            Err(e) => return Err(e.with_attempts(attempt)),
        }
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.permits.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.freed.notify_one();
    }
}

/// Caps the number of in-flight calls to the wrapped provider.
pub struct LimitedProvider<P> {
    inner: P,
    sem: Semaphore,
}

impl<P: Provider> LimitedProvider<P> {
    pub fn new(inner: P, max_in_flight: usize) -> Self {
        Self {
            inner,
            sem: Semaphore {
                permits: Mutex::new(max_in_flight.max(1)),
                freed: Condvar::new(),
            },
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Provider> Provider for LimitedProvider<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete_once(&self, transcript: &ChatTranscript, params: &GenerationParams) -> Result<ProviderResponse, ProviderError> {
        let _permit = self.sem.acquire();
        self.inner.complete_once(transcript, params)
    }
}

pub(crate) fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis().min(u128::from(u64::MAX)) as u64
}
