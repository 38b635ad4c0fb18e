//! Chat-completion client for HTTP providers.
//!
//! Request body: `model`, `messages[{role, content}]`, `temperature`,
//! `top_p`, `presence_penalty`, `max_tokens`, and `frequency_penalty` when
//! the endpoint is configured to accept it.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{elapsed_ms, ChatTranscript, FinishReason, GenerationParams, Provider, ProviderError, ProviderResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub id: String,
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer credential.
    pub api_key_env: String,
    pub timeout_ms: u64,
    /// Map the repetition penalty onto `frequency_penalty`; otherwise it is
    /// not sent.
    pub supports_frequency_penalty: bool,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            id: "remote".into(),
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "CAREXPERT_API_KEY".into(),
            timeout_ms: 30_000,
            supports_frequency_penalty: false,
        }
    }
}

pub struct RemoteChatProvider {
    config: RemoteConfig,
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteChatProvider {
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            tracing::warn!(env = %config.api_key_env, "no credential set for remote provider");
        }
        if !config.supports_frequency_penalty {
            tracing::info!(provider = %config.id, "repetition penalty is not sent to this provider");
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            config,
            api_key,
            agent,
        }
    }

    pub fn request_body(&self, transcript: &ChatTranscript, params: &GenerationParams) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": transcript.messages,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "presence_penalty": params.presence_penalty,
            "max_tokens": params.max_tokens,
        });
        if self.config.supports_frequency_penalty {
            body["frequency_penalty"] = json!((params.repetition_penalty - 1.0).clamp(-2.0, 2.0));
        }
        body
    }
}

fn parse_finish(s: Option<&str>) -> FinishReason {
    match s {
        Some("length") => FinishReason::Length,
        Some("content_filter") => FinishReason::Filtered,
        _ => FinishReason::Stop,
    }
}

impl Provider for RemoteChatProvider {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn complete_once(&self, transcript: &ChatTranscript, params: &GenerationParams) -> Result<ProviderResponse, ProviderError> {
        let start = Instant::now();
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(self.request_body(transcript, params)).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout { attempts: 1 },
            other => ProviderError::Transport {
                message: other.to_string(),
                retryable: true,
                attempts: 1,
            },
        })?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(ProviderError::Transport {
                message: format!("HTTP {status}"),
                retryable: status == 429 || status >= 500,
                attempts: 1,
            });
        }
        let value: Value = resp.body_mut().read_json().map_err(|e| ProviderError::Transport {
            message: format!("unreadable response: {e}"),
            retryable: false,
            attempts: 1,
        })?;
        let choice = &value["choices"][0];
        let message = &choice["message"];
        let (text, finish_reason) = if message["refusal"].as_str().is_some_and(|r| !r.is_empty()) {
            (String::new(), FinishReason::Filtered)
        } else {
            (
                message["content"].as_str().unwrap_or_default().to_string(),
                parse_finish(choice["finish_reason"].as_str()),
            )
        };
        Ok(ProviderResponse {
            text,
            finish_reason,
            latency_ms: elapsed_ms(start),
            provider_id: self.config.id.clone(),
        })
    }
}
