use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::triggers::{VisualCatalog, NONE_TOKEN};

const STANDARD_PROMPTS: &str = include_str!("../../assets/prompts.toml");
pub const MIN_DECIDER_EXAMPLES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeciderExample {
    pub query: String,
    pub reasoning: String,
    pub token: String,
}

/// Every prompt text the agents use. Loaded from a TOML file so exhibit
/// staff can tune wording without a rebuild.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSet {
    pub persona_charter: String,
    pub responder_instructions: String,
    /// Must contain `{catalog}` and `{examples}`.
    pub decider_instructions: String,
    /// Appended on the re-prompt; `{tokens}` lists the valid answers.
    pub decider_strict: String,
    pub rewriter_instructions: String,
    pub canned_reply: String,
    #[serde(rename = "decider_example")]
    pub decider_examples: Vec<DeciderExample>,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("prompt file: {0}")]
    Parse(String),
    #[error("prompt file: {0}")]
    Invalid(String),
    #[error("reading prompt file: {0}")]
    Io(#[from] std::io::Error),
}

impl PromptSet {
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let set: PromptSet = toml::from_str(text).map_err(|e| PromptError::Parse(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn standard() -> Self {
        Self::from_toml(STANDARD_PROMPTS).expect("bundled prompts are valid")
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for placeholder in ["{catalog}", "{examples}"] {
            if !self.decider_instructions.contains(placeholder) {
                return Err(PromptError::Invalid(format!(
                    "decider_instructions lacks {placeholder}"
                )));
            }
        }
        if self.canned_reply.trim().is_empty() {
            return Err(PromptError::Invalid("canned_reply is empty".into()));
        }
        if self.persona_charter.trim().is_empty() {
            return Err(PromptError::Invalid("persona_charter is empty".into()));
        }
        if self.decider_examples.len() < MIN_DECIDER_EXAMPLES {
            return Err(PromptError::Invalid(format!(
                "need at least {MIN_DECIDER_EXAMPLES} decider examples, found {}",
                self.decider_examples.len()
            )));
        }
        Ok(())
    }

    /// Examples whose token the catalog can actually show.
    pub fn examples_for<'a>(&'a self, catalog: &'a VisualCatalog) -> impl Iterator<Item = &'a DeciderExample> {
        self.decider_examples
            .iter()
            .filter(|e| e.token == NONE_TOKEN || catalog.get(&e.token).is_some())
    }

    pub fn decider_system(&self, catalog: &VisualCatalog) -> String {
        let listing: String = catalog
            .entries()
            .iter()
            .map(|e| format!("{}: {}\n", e.token, one_line(&e.description)))
            .collect();
        let examples: String = self
            .examples_for(catalog)
            .map(|e| {
                format!(
                    "Question: {}\nThinking: {}\n{}\n\n",
                    e.query.trim(),
                    e.reasoning.trim(),
                    e.token
                )
            })
            .collect();
        self.decider_instructions
            .trim()
            .replace("{catalog}", listing.trim_end())
            .replace("{examples}", examples.trim_end())
    }

    pub fn decider_strict_text(&self, catalog: &VisualCatalog) -> String {
        let mut tokens: Vec<&str> = catalog.tokens().collect();
        tokens.push(NONE_TOKEN);
        self.decider_strict.trim().replace("{tokens}", &tokens.join(" "))
    }

    pub fn responder_system(&self) -> String {
        format!(
            "{}\n\n{}",
            self.persona_charter.trim(),
            self.responder_instructions.trim()
        )
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
