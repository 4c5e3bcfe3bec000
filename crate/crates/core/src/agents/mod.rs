//! The three language-model stages and the backends they talk to.
//!
//! The decider picks a visual before anything else runs and only ever
//! returns a catalog token or `NONE`. The rewriter turns a spoken question
//! into a search query and fails open to the original text. The responder
//! speaks as the Ocean over the retrieved passages and never goes silent.
//! Decider and rewriter are stateless; only the responder sees history.

mod backend;
mod decider;
mod history;
mod http;
mod mock;
mod prompts;
mod responder;
mod rewriter;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{
    backend_complete, BackendError, ChatBackend, ChatMessage, CompletionParams, RetryPolicy, Role,
};
pub use decider::decide_visual;
pub use history::{ConversationHistory, Turn, DEFAULT_HISTORY_CAP};
pub use http::HttpChatBackend;
pub use mock::{EchoBackend, MockBackend, MockScript, RecordingBackend, ScriptError, INPUT_PLACEHOLDER};
pub use prompts::{DeciderExample, PromptError, PromptSet, MIN_DECIDER_EXAMPLES};
pub use responder::{build_responder_messages, respond, MAX_CONTEXT_PARAGRAPHS};
pub use rewriter::{extract_rewrite, rewrite_query, REWRITE_MARKER};

pub(crate) use backend::millis;
use backend::RetryBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Decider,
    Rewriter,
    Responder,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Decider, Stage::Rewriter, Stage::Responder];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Decider => "decider",
            Stage::Rewriter => "rewriter",
            Stage::Responder => "responder",
        }
    }
}

/// The decider's answer. `token` is a catalog token or `NONE`;
/// `rationale_text` is the reasoning that preceded it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualSelection {
    pub token: String,
    pub rationale_text: String,
}

impl VisualSelection {
    pub fn none() -> Self {
        VisualSelection {
            token: crate::triggers::NONE_TOKEN.to_string(),
            rationale_text: String::new(),
        }
    }

    pub fn is_none(&self) -> bool {
        self.token == crate::triggers::NONE_TOKEN
    }
}

/// What one stage did, for the operator console and replay diffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub stage: Stage,
    /// SHA-256 of the last prompt sent, hex.
    pub prompt_hash: String,
    pub raw_output: String,
    pub duration_ms: f64,
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-stage completion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageParams {
    pub decider: CompletionParams,
    pub rewriter: CompletionParams,
    pub responder: CompletionParams,
}

impl Default for StageParams {
    fn default() -> Self {
        StageParams {
            decider: CompletionParams {
                max_tokens: 96,
                temperature: 0.0,
                ..CompletionParams::default()
            },
            rewriter: CompletionParams {
                max_tokens: 96,
                temperature: 0.0,
                ..CompletionParams::default()
            },
            responder: CompletionParams {
                max_tokens: 200,
                temperature: 0.7,
                ..CompletionParams::default()
            },
        }
    }
}

impl StageParams {
    pub fn get(&self, stage: Stage) -> &CompletionParams {
        match stage {
            Stage::Decider => &self.decider,
            Stage::Rewriter => &self.rewriter,
            Stage::Responder => &self.responder,
        }
    }
}

/// Prompts, parameters and retry policy shared by all stages.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub prompts: PromptSet,
    pub params: StageParams,
    pub retry: RetryPolicy,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            prompts: PromptSet::standard(),
            params: StageParams::default(),
            retry: RetryPolicy::default(),
        }
    }
}

pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(serde_json::to_vec(m).expect("messages serialize"));
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Bookkeeping shared by the stage implementations.
pub(crate) struct StageRun {
    stage: Stage,
    started: Instant,
    pub(crate) budget: RetryBudget,
    last_prompt: String,
    raw: String,
    error: Option<String>,
}

impl StageRun {
    pub(crate) fn new(stage: Stage, policy: RetryPolicy) -> Self {
        StageRun {
            stage,
            started: Instant::now(),
            budget: RetryBudget::new(policy),
            last_prompt: String::new(),
            raw: String::new(),
            error: None,
        }
    }

    pub(crate) fn call(
        &mut self,
        backend: &dyn ChatBackend,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, BackendError> {
        self.last_prompt = prompt_hash(messages);
        let out = self.budget.call(backend, messages, params);
        match &out {
            Ok(raw) => self.raw = raw.clone(),
            Err(e) => self.error = Some(e.to_string()),
        }
        out
    }

    pub(crate) fn fail(&mut self, message: impl Into<String>) {
        self.error = Some(message.into());
    }

    pub(crate) fn finish(self) -> AgentTrace {
        let elapsed: Duration = self.started.elapsed();
        AgentTrace {
            stage: self.stage,
            prompt_hash: self.last_prompt,
            raw_output: self.raw,
            duration_ms: elapsed.as_secs_f64() * 1e3,
            retries: self.budget.used,
            error: self.error,
        }
    }
}
