//! Live backend: a chat-completions HTTP transport plus retry policy.
//!
//! Transient failures (timeouts, connection errors, HTTP 429 and 5xx) are
//! retried with exponential backoff up to a fixed attempt budget;
//! everything else fails immediately. Credentials come from the
//! environment variable named in [`BackendConfig`] and are held only in
//! memory — they are never serialized anywhere.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{CompletionRequest, CompletionResponse, FinishReason};

/// Connection details for a chat-completions backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Model identifier sent with every request.
    pub model_id: String,
    /// API base, e.g. `https://api.example.com/v1`; the transport appends
    /// `/chat/completions`.
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Per-request timeout.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

/// A transport-level failure, classified for the retry loop.
#[derive(Debug, Clone)]
pub struct TransportError {
    pub transient: bool,
    pub reason: String,
}

impl TransportError {
    pub fn transient(reason: impl Into<String>) -> Self {
        TransportError {
            transient: true,
            reason: reason.into(),
        }
    }

    pub fn fatal(reason: impl Into<String>) -> Self {
        TransportError {
            transient: false,
            reason: reason.into(),
        }
    }
}

/// Anything that can physically deliver one completion request.
pub trait Transport: Send + Sync {
    fn send(
        &self,
        request: &CompletionRequest,
    ) -> std::result::Result<CompletionResponse, TransportError>;
}

/// Retry budget for transient transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first one.
    pub max_attempts: u32,
    /// Delay before the first retry; doubles per retry.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Default attempt budget with no sleeping, for tests.
    pub fn no_delay() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 0,
        }
    }
}

/// A transport paired with its retry policy.
pub struct LiveBackend {
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
}

impl LiveBackend {
    pub fn new(transport: Box<dyn Transport>, retry: RetryPolicy) -> Self {
        LiveBackend { transport, retry }
    }

    /// HTTP backend from config; reads the API key from the configured
    /// environment variable.
    pub fn http(config: &BackendConfig) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Config(format!(
                "environment variable `{}` (named by the backend config) is not set",
                config.api_key_env
            ))
        })?;
        Ok(LiveBackend::new(
            Box::new(HttpTransport::new(config, api_key)),
            RetryPolicy::default(),
        ))
    }

    /// Send with retries on transient failures.
    pub fn send_with_retry(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let mut delay = Duration::from_millis(self.retry.base_delay_ms);
        for attempt in 1..=self.retry.max_attempts {
            match self.transport.send(request) {
                Ok(response) => return Ok(response),
                Err(err) if err.transient && attempt < self.retry.max_attempts => {
                    log::warn!(
                        "transient backend failure (attempt {attempt}/{}): {}; retrying in {:?}",
                        self.retry.max_attempts,
                        err.reason,
                        delay
                    );
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    delay *= 2;
                }
                Err(err) => {
                    return Err(Error::Backend {
                        attempts: attempt,
                        reason: err.reason,
                    })
                }
            }
        }
        unreachable!("the retry loop always returns")
    }
}

/// Chat-completions transport over HTTP. The model id travels inside each
/// request, so the transport itself is model-agnostic.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(config: &BackendConfig, api_key: String) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        HttpTransport {
            agent,
            endpoint: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key,
        }
    }
}

impl Transport for HttpTransport {
    fn send(
        &self,
        request: &CompletionRequest,
    ) -> std::result::Result<CompletionResponse, TransportError> {
        let body = serde_json::json!({
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let result = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_json(body);
        match result {
            Ok(response) => {
                let json: serde_json::Value = response
                    .into_json()
                    .map_err(|e| TransportError::fatal(format!("unreadable response body: {e}")))?;
                parse_chat_completion(&json)
            }
            Err(ureq::Error::Status(code, response)) => {
                let detail = response
                    .into_string()
                    .unwrap_or_else(|_| "<unreadable body>".to_string());
                let detail = detail.chars().take(400).collect::<String>();
                let err = TransportError {
                    transient: code == 429 || code >= 500,
                    reason: format!("HTTP {code}: {detail}"),
                };
                Err(err)
            }
            Err(ureq::Error::Transport(t)) => Err(TransportError::transient(t.to_string())),
        }
    }
}

/// Extract text, finish reason, and token usage from a chat-completions
/// response body.
fn parse_chat_completion(
    json: &serde_json::Value,
) -> std::result::Result<CompletionResponse, TransportError> {
    let choice = json
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| TransportError::fatal("response has no choices"))?;
    let text = choice
        .pointer("/message/content")
        .and_then(|v| v.as_str())
        .ok_or_else(|| TransportError::fatal("response choice has no message content"))?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(|v| v.as_str()) {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Unknown,
    };
    if text.is_empty() && finish_reason != FinishReason::Length {
        return Err(TransportError::fatal("backend returned an empty completion"));
    }
    Ok(CompletionResponse {
        text,
        finish_reason,
        prompt_tokens: json.pointer("/usage/prompt_tokens").and_then(|v| v.as_u64()),
        completion_tokens: json
            .pointer("/usage/completion_tokens")
            .and_then(|v| v.as_u64()),
    })
}
