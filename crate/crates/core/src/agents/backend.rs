use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
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

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionParams {
    pub max_tokens: u32,
    pub temperature: f32,
    pub stop_sequences: Vec<String>,
    #[serde(rename = "timeout_ms", with = "millis")]
    pub timeout: Duration,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            max_tokens: 256,
            temperature: 0.2,
            stop_sequences: Vec::new(),
            timeout: Duration::from_secs(10),
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_tokens == 0 {
            return Err("max_tokens must be at least 1".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err("temperature must be non-negative".into());
        }
        Ok(())
    }
}

pub(crate) mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// A chat-completion endpoint. Implementations must be re-entrant: one
/// backend is shared by every session.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, BackendError>;
}

pub(crate) fn check_messages(messages: &[ChatMessage]) -> Result<(), BackendError> {
    match messages.first() {
        None => Err(BackendError::InvalidRequest("no messages".into())),
        Some(m) if m.role != Role::System => Err(BackendError::InvalidRequest(
            "first message must be the system prompt".into(),
        )),
        _ => {
            if messages
                .iter()
                .any(|m| m.role != Role::System && m.content.trim().is_empty())
            {
                return Err(BackendError::InvalidRequest("empty user/assistant message".into()));
            }
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(rename = "backoff_ms", with = "millis")]
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            backoff: Duration::from_millis(100),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            backoff: Duration::ZERO,
        }
    }
}

/// Retry budget for one agent stage. Transport retries and re-prompts both
/// draw from it.
#[derive(Debug)]
pub(crate) struct RetryBudget {
    policy: RetryPolicy,
    pub(crate) used: u32,
}

impl RetryBudget {
    pub(crate) fn new(policy: RetryPolicy) -> Self {
        RetryBudget { policy, used: 0 }
    }

    pub(crate) fn take(&mut self) -> bool {
        if self.used < self.policy.max_retries {
            self.used += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn call(
        &mut self,
        backend: &dyn ChatBackend,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, BackendError> {
        check_messages(messages)?;
        let mut transport_retries = 0u32;
        loop {
            match backend.complete(messages, params) {
                Err(e) if e.is_retriable() && self.take() => {
                    let delay = self.policy.backoff * 2u32.saturating_pow(transport_retries);
                    transport_retries += 1;
                    tracing::debug!(error = %e, ?delay, "retrying backend call");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
                other => return other,
            }
        }
    }
}

/// One completion with transport retries and exponential backoff.
pub fn backend_complete(
    backend: &dyn ChatBackend,
    messages: &[ChatMessage],
    params: &CompletionParams,
    policy: RetryPolicy,
) -> Result<String, BackendError> {
    RetryBudget::new(policy).call(backend, messages, params)
}
