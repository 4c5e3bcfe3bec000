use std::collections::{BTreeMap, BTreeSet};

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{RulesError, TriggerEvent, TriggerRule};

/// Lowercases a character when that yields exactly one character, so
/// character offsets survive normalization.
pub fn normalize_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub fn normalize_phrase(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .map(normalize_char)
        .collect()
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// A boundary-respecting occurrence of one rule phrase, in character offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhraseMatch {
    pub rule: usize,
    pub phrase: usize,
    pub start: usize,
    pub end: usize,
}

/// Last-fire times per rule, in the caller's millisecond clock. Owned by a
/// session and carried across scans.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooldownState {
    last_fired: BTreeMap<String, u64>,
}

impl CooldownState {
    pub fn is_cooling(&self, rule: &TriggerRule, now_ms: u64) -> bool {
        let window = rule.cooldown.as_millis() as u64;
        self.last_fired
            .get(&rule.rule_id)
            .is_some_and(|&t| window > 0 && now_ms.saturating_sub(t) < window)
    }

    pub fn record(&mut self, rule_id: &str, now_ms: u64) {
        self.last_fired.insert(rule_id.to_string(), now_ms);
    }

    pub fn last_fired(&self, rule_id: &str) -> Option<u64> {
        self.last_fired.get(rule_id).copied()
    }
}

/// Compiled multi-phrase matcher. Immutable once built.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    rules: Vec<TriggerRule>,
    normalized: Vec<Vec<String>>,
    automaton: Option<AhoCorasick>,
    owners: Vec<(usize, usize)>,
}

pub fn compile_rules(rules: Vec<TriggerRule>) -> Result<KeywordMatcher, RulesError> {
    KeywordMatcher::new(rules)
}

impl KeywordMatcher {
    pub fn new(rules: Vec<TriggerRule>) -> Result<Self, RulesError> {
        let mut ids = BTreeSet::new();
        let mut patterns = Vec::new();
        let mut owners = Vec::new();
        let mut normalized = Vec::with_capacity(rules.len());
        for (r, rule) in rules.iter().enumerate() {
            if !ids.insert(rule.rule_id.as_str()) {
                return Err(RulesError::Invalid {
                    line: 0,
                    message: format!("duplicate rule id `{}`", rule.rule_id),
                });
            }
            if rule.phrases.is_empty() {
                return Err(RulesError::Invalid {
                    line: 0,
                    message: format!("rule `{}` has no phrases", rule.rule_id),
                });
            }
            let mut norm = Vec::with_capacity(rule.phrases.len());
            for (p, phrase) in rule.phrases.iter().enumerate() {
                let n = normalize_phrase(phrase);
                if n.is_empty() {
                    return Err(RulesError::Invalid {
                        line: 0,
                        message: format!("rule `{}` has an empty phrase", rule.rule_id),
                    });
                }
                patterns.push(n.clone());
                owners.push((r, p));
                norm.push(n);
            }
            normalized.push(norm);
        }
        let automaton = if patterns.is_empty() {
            None
        } else {
            Some(
                AhoCorasickBuilder::new()
                    .match_kind(MatchKind::Standard)
                    .build(&patterns)
                    .map_err(|e| RulesError::Invalid {
                        line: 0,
                        message: e.to_string(),
                    })?,
            )
        };
        Ok(KeywordMatcher {
            rules,
            normalized,
            automaton,
            owners,
        })
    }

    pub fn rules(&self) -> &[TriggerRule] {
        &self.rules
    }

    /// Lowercase-normalized phrases of rule `idx`, as matched.
    pub fn phrases(&self, idx: usize) -> &[String] {
        &self.normalized[idx]
    }

    /// Every case-insensitive, word-bounded phrase occurrence, sorted.
    pub fn find_all(&self, text: &str) -> Vec<PhraseMatch> {
        let Some(ac) = &self.automaton else {
            return Vec::new();
        };
        let chars: Vec<char> = text.chars().map(normalize_char).collect();
        let haystack: String = chars.iter().collect();
        let mut byte_to_char = vec![0usize; haystack.len() + 1];
        for (ci, (bi, _)) in haystack.char_indices().enumerate() {
            byte_to_char[bi] = ci;
        }
        byte_to_char[haystack.len()] = chars.len();

        let mut out: Vec<PhraseMatch> = ac
            .find_overlapping_iter(&haystack)
            .filter_map(|m| {
                let start = byte_to_char[m.start()];
                let end = byte_to_char[m.end()];
                let left_ok = start == 0 || !is_word_char(chars[start - 1]);
                let right_ok = end == chars.len() || !is_word_char(chars[end]);
                let (rule, phrase) = self.owners[m.pattern().as_usize()];
                (left_ok && right_ok).then_some(PhraseMatch {
                    rule,
                    phrase,
                    start,
                    end,
                })
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Scan without cooldown state.
    pub fn scan(&self, text: &str) -> Vec<TriggerEvent> {
        self.resolve(text, self.find_all(text), |_| true).0
    }

    /// Scan that suppresses rules still cooling down and records the rules
    /// that fire.
    pub fn scan_at(
        &self,
        text: &str,
        now_ms: u64,
        cooldowns: &mut CooldownState,
    ) -> Vec<TriggerEvent> {
        let snapshot = cooldowns.clone();
        let (events, fired) = self.resolve(text, self.find_all(text), |r| {
            !snapshot.is_cooling(&self.rules[r], now_ms)
        });
        for r in fired {
            cooldowns.record(&self.rules[r].rule_id, now_ms);
        }
        events
    }

    fn resolve(
        &self,
        text: &str,
        matches: Vec<PhraseMatch>,
        eligible: impl Fn(usize) -> bool,
    ) -> (Vec<TriggerEvent>, Vec<usize>) {
        let mut candidates: Vec<PhraseMatch> =
            matches.into_iter().filter(|m| eligible(m.rule)).collect();
        candidates.sort_by(|a, b| {
            (b.end - b.start)
                .cmp(&(a.end - a.start))
                .then_with(|| self.rules[b.rule].priority.cmp(&self.rules[a.rule].priority))
                .then_with(|| a.start.cmp(&b.start))
                .then_with(|| a.rule.cmp(&b.rule))
        });
        let mut accepted: Vec<PhraseMatch> = Vec::new();
        let mut fired = BTreeSet::new();
        for m in candidates {
            if fired.contains(&m.rule) {
                continue;
            }
            if accepted.iter().any(|a| m.start < a.end && a.start < m.end) {
                continue;
            }
            fired.insert(m.rule);
            accepted.push(m);
        }
        accepted.sort_by_key(|m| (m.start, m.end, m.rule));

        let chars: Vec<char> = text.chars().collect();
        let events = accepted
            .iter()
            .map(|m| {
                let rule = &self.rules[m.rule];
                let mut payload = rule.event.payload.clone();
                let matched: String = chars[m.start..m.end].iter().collect();
                payload.insert("matched".into(), Value::String(matched));
                TriggerEvent {
                    rule_id: rule.rule_id.clone(),
                    kind: rule.event.kind,
                    payload,
                    source_span: (m.start, m.end),
                }
            })
            .collect();
        (events, accepted.into_iter().map(|m| m.rule).collect())
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::triggers::EventKind;

    fn rule(id: &str, phrases: &[&str]) -> TriggerRule {
        TriggerRule::new(id, phrases, EventKind::VideoPlay).with_payload("token", "SEA_LEVEL")
    }

    #[test]
    fn empty_rule_set_matches_nothing() {
        let m = compile_rules(vec![]).unwrap();
        assert!(m.scan("the sea level").is_empty());
    }

    #[test]
    fn nested_phrases_both_compiled() {
        let m = compile_rules(vec![rule("a", &["sea level"]), rule("b", &["sea"])]).unwrap();
        let all = m.find_all("sea level");
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn single_event_with_span() {
        let m = compile_rules(vec![rule("sl", &["sea level"])]).unwrap();
        let ev = m.scan("the sea level is rising");
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].source_span, (4, 13));
        assert_eq!(ev[0].kind, EventKind::VideoPlay);
    }

    #[test]
    fn word_boundaries() {
        let m = compile_rules(vec![rule("sl", &["sea level"])]).unwrap();
        assert!(m.scan("undersea levels").is_empty());
        assert!(m.scan("sea levels").is_empty());
        assert_eq!(m.scan("Sea Level!").len(), 1);
        assert_eq!(m.scan("(SEA LEVEL)").len(), 1);
    }

    #[test]
    fn longest_match_wins() {
        let m = compile_rules(vec![rule("short", &["sea"]), rule("long", &["sea level"])]).unwrap();
        let ev = m.scan("sea level");
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].rule_id, "long");
    }

    #[test]
    fn priority_breaks_equal_length_overlap() {
        let a = rule("a", &["cold sea"]);
        let b = rule("b", &["sea kelp"]).with_priority(5);
        let m = compile_rules(vec![a, b]).unwrap();
        let ev = m.scan("cold sea kelp");
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].rule_id, "b");
    }

    #[test]
    fn one_event_per_rule_in_offset_order() {
        let m = compile_rules(vec![rule("reef", &["reef", "coral"]), rule("sl", &["sea level"])])
            .unwrap();
        let ev = m.scan("coral and sea level and reef");
        let ids: Vec<&str> = ev.iter().map(|e| e.rule_id.as_str()).collect();
        assert_eq!(ids, vec!["reef", "sl"]);
        assert_eq!(ev[0].source_span, (0, 5));
    }

    #[test]
    fn cooldown_suppresses_until_expired() {
        let m = compile_rules(vec![rule("sl", &["sea level"]).with_cooldown(Duration::from_secs(30))])
            .unwrap();
        let mut cd = CooldownState::default();
        assert_eq!(m.scan_at("sea level", 1_000, &mut cd).len(), 1);
        assert!(m.scan_at("sea level", 20_000, &mut cd).is_empty());
        assert_eq!(cd.last_fired("sl"), Some(1_000));
        assert_eq!(m.scan_at("sea level", 31_000, &mut cd).len(), 1);
    }

    #[test]
    fn cooling_rule_does_not_block_shorter_match() {
        let m = compile_rules(vec![rule("long", &["sea level"]), rule("short", &["sea"])]).unwrap();
        let mut cd = CooldownState::default();
        cd.record("long", 0);
        let ev = m.scan_at("sea level", 10, &mut cd);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].rule_id, "short");
    }

    #[test]
    fn offsets_are_characters_not_bytes() {
        let m = compile_rules(vec![rule("sl", &["sea level"])]).unwrap();
        let ev = m.scan("Ωcéan · sea level");
        assert_eq!(ev[0].source_span, (8, 17));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(compile_rules(vec![rule("a", &["x"]), rule("a", &["y"])]).is_err());
        assert!(compile_rules(vec![rule("a", &["  "])]).is_err());
    }
}
