//! Response-side audio-visual control: the visual catalog that selection
//! tokens index into, and the keyword rules scanned over responses.

mod catalog;
mod matcher;
mod rules;

pub use catalog::{
    is_grammar_safe_token, resolve_visual, VisualCatalog, VisualCatalogEntry, VisualKind,
    NONE_TOKEN,
};
pub use matcher::{
    compile_rules, is_word_char, normalize_char, normalize_phrase, CooldownState,
    KeywordMatcher, PhraseMatch,
};
pub use rules::{
    load_rules, parse_rules, standard_rules, EventKind, EventTemplate, TriggerEvent,
    TriggerRule, DEFAULT_COOLDOWN,
};

#[derive(Debug, thiserror::Error)]
pub enum RulesError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

impl RulesError {
    pub(crate) fn from_toml(text: &str, err: toml::de::Error) -> Self {
        let (line, column) = err.span().map_or((0, 0), |s| {
            let line = line_of(text, s.start);
            let line_start = text[..s.start].rfind('\n').map_or(0, |i| i + 1);
            (line, text[line_start..s.start].chars().count() + 1)
        });
        RulesError::Syntax {
            line,
            column,
            message: err.message().to_string(),
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            RulesError::Syntax { line, .. } | RulesError::Invalid { line, .. } => Some(*line),
            RulesError::Io(_) => None,
        }
    }
}

/// 1-based line number of a byte offset.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}
