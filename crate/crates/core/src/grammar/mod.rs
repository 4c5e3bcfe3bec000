//! A GBNF subset used to gate agent output.
//!
//! Grammars are parsed once, validated (no undefined rules, no left
//! recursion) and then shared read-only. Agent completions are checked
//! after the fact: [`Grammar::matches`] for whole strings,
//! [`Grammar::prefix_valid`] for streamed partial output and
//! [`Grammar::extract_token`] to pull the final answer out of free text.

mod analysis;
mod ast;
mod matcher;
mod parse;

use std::collections::{BTreeMap, BTreeSet};

pub use ast::{Expr, Grammar, RepeatKind};
pub use parse::{parse_gbnf, ROOT_RULE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("rule `{rule}` references undefined rule `{name}`")]
    UndefinedRule { name: String, rule: String },
    #[error("left recursion: {}", .0.join(" -> "))]
    LeftRecursion(Vec<String>),
    #[error("missing `{0}` rule")]
    MissingRoot(String),
    #[error("rule `{0}` defined twice")]
    DuplicateRule(String),
    #[error("token set is empty")]
    EmptyTokenSet,
    #[error("token list contains an empty token")]
    EmptyToken,
    #[error("duplicate token `{0}`")]
    DuplicateToken(String),
}

impl Grammar {
    /// Whole-string membership.
    pub fn matches(&self, candidate: &str) -> bool {
        matcher::matches(self, candidate)
    }

    /// True iff some string in the language starts with `prefix`.
    pub fn prefix_valid(&self, prefix: &str) -> bool {
        matcher::prefix_valid(self, prefix)
    }

    /// The last whitespace-delimited word of `raw_output` that the grammar
    /// accepts.
    pub fn extract_token<'a>(&self, raw_output: &'a str) -> Option<&'a str> {
        raw_output
            .split_whitespace()
            .rev()
            .find(|word| self.matches(word))
    }
}

/// Grammar whose language is exactly `tokens`.
pub fn grammar_from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Grammar, GrammarError> {
    if tokens.is_empty() {
        return Err(GrammarError::EmptyTokenSet);
    }
    let mut seen = BTreeSet::new();
    let mut alts = Vec::with_capacity(tokens.len());
    for t in tokens {
        let t = t.as_ref();
        if t.is_empty() {
            return Err(GrammarError::EmptyToken);
        }
        if !seen.insert(t) {
            return Err(GrammarError::DuplicateToken(t.to_string()));
        }
        alts.push(Expr::Literal(t.to_string()));
    }
    let body = if alts.len() == 1 {
        alts.pop().unwrap()
    } else {
        Expr::Alternation(alts)
    };
    parse::validate(
        BTreeMap::from([(ROOT_RULE.to_string(), body)]),
        ROOT_RULE.to_string(),
    )
}

pub fn matches(grammar: &Grammar, candidate: &str) -> bool {
    grammar.matches(candidate)
}

pub fn prefix_valid(grammar: &Grammar, prefix: &str) -> bool {
    grammar.prefix_valid(prefix)
}

pub fn extract_token<'a>(grammar: &Grammar, raw_output: &'a str) -> Option<&'a str> {
    grammar.extract_token(raw_output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_grammar() {
        let g = grammar_from_tokens(&["NONE"]).unwrap();
        assert!(g.matches("NONE"));
        assert!(!g.matches("NON"));
        assert!(!g.matches("NONE "));
        assert!(!g.matches(""));
    }

    #[test]
    fn token_language_is_exact() {
        let g = grammar_from_tokens(&["CO2", "SST"]).unwrap();
        assert!(g.matches("CO2") && g.matches("SST"));
        assert!(!g.matches("CO") && !g.matches("SST2"));
    }

    #[test]
    fn token_errors() {
        let empty: [&str; 0] = [];
        assert_eq!(grammar_from_tokens(&empty), Err(GrammarError::EmptyTokenSet));
        assert_eq!(grammar_from_tokens(&["A", ""]), Err(GrammarError::EmptyToken));
        assert_eq!(
            grammar_from_tokens(&["A", "A"]),
            Err(GrammarError::DuplicateToken("A".into()))
        );
    }

    #[test]
    fn prefixes() {
        let g = grammar_from_tokens(&["CHLOROPHYLL"]).unwrap();
        assert!(g.prefix_valid("CHLO"));
        assert!(g.prefix_valid(""));
        assert!(g.prefix_valid("CHLOROPHYLL"));
        assert!(!g.prefix_valid("CHX"));
        assert!(!g.prefix_valid("CHLOROPHYLLS"));
    }

    #[test]
    fn prefix_respects_unproductive_rules() {
        // `loop` can never terminate, so nothing ever follows "a".
        let g = parse_gbnf("root ::= \"a\" loop | \"b\"\nloop ::= \"x\" loop").unwrap();
        assert!(!g.prefix_valid("a"));
        assert!(!g.prefix_valid("ax"));
        assert!(g.prefix_valid("b"));
    }

    #[test]
    fn extraction_takes_last_valid_word() {
        let g = grammar_from_tokens(&["CO2", "CHLOROPHYLL", "SST", "NONE"]).unwrap();
        assert_eq!(g.extract_token("reasoning... final: SST"), Some("SST"));
        assert_eq!(g.extract_token("no match here"), None);
        assert_eq!(
            g.extract_token("maybe CO2 but really CHLOROPHYLL"),
            Some("CHLOROPHYLL")
        );
        assert_eq!(g.extract_token("SST\n\nthen nothing"), Some("SST"));
    }

    #[test]
    fn nullable_repeat_terminates() {
        let g = parse_gbnf("root ::= (\"a\"?)* \"b\"").unwrap();
        assert!(g.matches("aab"));
        assert!(g.matches("b"));
        assert!(!g.matches("aa"));
    }

    #[test]
    fn right_recursion_and_classes() {
        let g = parse_gbnf("root ::= [a-c] root | \"!\"").unwrap();
        assert!(g.matches("abc!"));
        assert!(!g.matches("abd!"));
        let long: String = "ab".repeat(5000) + "!";
        assert!(g.matches(&long));
    }
}
