use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;

use super::{BackendError, ChatBackend, ChatMessage, CompletionParams, Role, Stage};

const DEFAULT_FALLBACK: &str = "NONE";
/// Replaced in a scripted response by the last user message.
pub const INPUT_PLACEHOLDER: &str = "{input}";

#[derive(Debug, Clone)]
enum Matcher {
    Any,
    Substring(String),
    Regex(Regex),
}

impl Matcher {
    fn fires(&self, text: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Substring(s) => text.to_lowercase().contains(s),
            Matcher::Regex(r) => r.is_match(text),
        }
    }
}

#[derive(Debug, Clone)]
struct MockRule {
    stage: Option<Stage>,
    matcher: Matcher,
    response: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptEntry {
    #[serde(default)]
    stage: Option<Stage>,
    #[serde(default, rename = "match")]
    substring: Option<String>,
    #[serde(default)]
    regex: Option<String>,
    response: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    fallback: Option<String>,
    #[serde(default)]
    latency_ms: BTreeMap<Stage, u64>,
    #[serde(default)]
    response: Vec<ScriptEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("mock script: {0}")]
    Parse(String),
    #[error("mock script entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error("reading mock script: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered `{match | regex, response}` entries, optionally scoped to one
/// agent stage. Substring matches are case-insensitive; an entry with
/// neither key matches everything. `{input}` in a response is replaced by
/// the last user message.
#[derive(Debug, Clone, Default)]
pub struct MockScript {
    rules: Vec<MockRule>,
    fallback: Option<String>,
    latency: BTreeMap<Stage, Duration>,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let file: ScriptFile = toml::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))?;
        let mut rules = Vec::with_capacity(file.response.len());
        for (index, entry) in file.response.into_iter().enumerate() {
            let matcher = match (entry.substring, entry.regex) {
                (Some(_), Some(_)) => {
                    return Err(ScriptError::Entry {
                        index,
                        message: "use either `match` or `regex`, not both".into(),
                    })
                }
                (Some(s), None) => Matcher::Substring(s.to_lowercase()),
                (None, Some(r)) => Matcher::Regex(Regex::new(&r).map_err(|e| ScriptError::Entry {
                    index,
                    message: e.to_string(),
                })?),
                (None, None) => Matcher::Any,
            };
            rules.push(MockRule {
                stage: entry.stage,
                matcher,
                response: entry.response,
            });
        }
        Ok(MockScript {
            rules,
            fallback: file.fallback,
            latency: file
                .latency_ms
                .into_iter()
                .map(|(k, v)| (k, Duration::from_millis(v)))
                .collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn push(&mut self, stage: Option<Stage>, substring: &str, response: &str) {
        self.rules.push(MockRule {
            stage,
            matcher: Matcher::Substring(substring.to_lowercase()),
            response: response.to_string(),
        });
    }

    pub fn push_regex(&mut self, stage: Option<Stage>, pattern: &str, response: &str) {
        self.rules.push(MockRule {
            stage,
            matcher: Matcher::Regex(Regex::new(pattern).expect("valid regex")),
            response: response.to_string(),
        });
    }

    pub fn set_latency(&mut self, stage: Stage, latency: Duration) {
        self.latency.insert(stage, latency);
    }

    /// Backend answering with the entries for `stage` (plus unscoped ones).
    pub fn backend_for(&self, stage: Stage) -> MockBackend {
        MockBackend {
            rules: self
                .rules
                .iter()
                .filter(|r| r.stage.is_none_or(|s| s == stage))
                .cloned()
                .collect(),
            fallback: self
                .fallback
                .clone()
                .unwrap_or_else(|| DEFAULT_FALLBACK.to_string()),
            latency: self.latency.get(&stage).copied().unwrap_or_default(),
        }
    }
}

/// Deterministic scripted backend: the first entry whose matcher fires on
/// the last user message wins, otherwise the fixed fallback.
#[derive(Debug, Clone)]
pub struct MockBackend {
    rules: Vec<MockRule>,
    fallback: String,
    latency: Duration,
}

impl MockBackend {
    pub fn new(fallback: impl Into<String>) -> Self {
        MockBackend {
            rules: Vec::new(),
            fallback: fallback.into(),
            latency: Duration::ZERO,
        }
    }

    pub fn with_response(mut self, substring: &str, response: &str) -> Self {
        self.rules.push(MockRule {
            stage: None,
            matcher: Matcher::Substring(substring.to_lowercase()),
            response: response.to_string(),
        });
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }
}

pub(crate) fn last_user(messages: &[ChatMessage]) -> &str {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map_or("", |m| m.content.as_str())
}

impl ChatBackend for MockBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _params: &CompletionParams,
    ) -> Result<String, BackendError> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let text = last_user(messages);
        let template = self
            .rules
            .iter()
            .find(|r| r.matcher.fires(text))
            .map_or(&self.fallback, |r| &r.response);
        Ok(template.replace(INPUT_PLACEHOLDER, text))
    }
}

/// Answers with the last user message verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl ChatBackend for EchoBackend {
    fn complete(&self, messages: &[ChatMessage], _: &CompletionParams) -> Result<String, BackendError> {
        Ok(last_user(messages).to_string())
    }
}

/// Records every prompt sent through it before delegating.
#[derive(Clone)]
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    captured: Arc<Mutex<Vec<Vec<ChatMessage>>>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        RecordingBackend {
            inner,
            captured: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn prompts(&self) -> Vec<Vec<ChatMessage>> {
        self.captured.lock().unwrap().clone()
    }

    pub fn last_prompt(&self) -> Option<Vec<ChatMessage>> {
        self.captured.lock().unwrap().last().cloned()
    }

    pub fn clear(&self) {
        self.captured.lock().unwrap().clear();
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, messages: &[ChatMessage], params: &CompletionParams) -> Result<String, BackendError> {
        self.captured.lock().unwrap().push(messages.to_vec());
        self.inner.complete(messages, params)
    }
}
