use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{line_of, RulesError};

pub const DEFAULT_COOLDOWN: Duration = Duration::from_secs(30);
const STANDARD_RULES: &str = include_str!("../../assets/rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LayerOn,
    LayerOff,
    CameraMove,
    VideoPlay,
    Subtitle,
}

impl EventKind {
    /// Payload keys every event of this kind must carry.
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            EventKind::LayerOn | EventKind::LayerOff | EventKind::VideoPlay => &["token"],
            EventKind::CameraMove => &["lat", "lon"],
            EventKind::Subtitle => &["text"],
        }
    }

    pub fn validate_payload(self, payload: &BTreeMap<String, Value>) -> Result<(), String> {
        for key in self.required_keys() {
            let Some(v) = payload.get(*key) else {
                return Err(format!("{self:?} payload is missing `{key}`"));
            };
            let ok = match *key {
                "lat" => v.as_f64().is_some_and(|x| (-90.0..=90.0).contains(&x)),
                "lon" => v.as_f64().is_some_and(|x| (-180.0..=180.0).contains(&x)),
                _ => v.as_str().is_some_and(|s| !s.is_empty()),
            };
            if !ok {
                return Err(format!("{self:?} payload has an invalid `{key}`"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTemplate {
    pub kind: EventKind,
    #[serde(default)]
    pub payload: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerRule {
    pub rule_id: String,
    pub phrases: Vec<String>,
    pub event: EventTemplate,
    pub priority: i32,
    pub cooldown: Duration,
}

impl TriggerRule {
    pub fn new(rule_id: impl Into<String>, phrases: &[&str], kind: EventKind) -> Self {
        TriggerRule {
            rule_id: rule_id.into(),
            phrases: phrases.iter().map(|p| p.to_string()).collect(),
            event: EventTemplate {
                kind,
                payload: BTreeMap::new(),
            },
            priority: 0,
            cooldown: DEFAULT_COOLDOWN,
        }
    }

    pub fn with_payload(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.event.payload.insert(key.to_string(), value.into());
        self
    }

    pub fn with_priority(mut self, priority: i32) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_cooldown(mut self, cooldown: Duration) -> Self {
        self.cooldown = cooldown;
        self
    }
}

/// An audio-visual command produced by a keyword match. `source_span` is a
/// half-open range of character offsets into the response text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub rule_id: String,
    pub kind: EventKind,
    pub payload: BTreeMap<String, Value>,
    pub source_span: (usize, usize),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    id: toml::Spanned<String>,
    phrases: toml::Spanned<Vec<String>>,
    kind: toml::Spanned<EventKind>,
    #[serde(default)]
    payload: Option<toml::Spanned<BTreeMap<String, toml::Value>>>,
    #[serde(default)]
    priority: i32,
    #[serde(default)]
    cooldown_ms: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    #[serde(default)]
    rule: Vec<RuleEntry>,
}

fn toml_to_json(v: toml::Value) -> Value {
    match v {
        toml::Value::String(s) => Value::String(s),
        toml::Value::Integer(i) => Value::from(i),
        toml::Value::Float(f) => Value::from(f),
        toml::Value::Boolean(b) => Value::Bool(b),
        toml::Value::Datetime(d) => Value::String(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.into_iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => {
            Value::Object(t.into_iter().map(|(k, v)| (k, toml_to_json(v))).collect())
        }
    }
}

/// Parses and validates a trigger-rule file. Every error names the line
/// of the offending entry.
pub fn parse_rules(text: &str) -> Result<Vec<TriggerRule>, RulesError> {
    let file: RulesFile = toml::from_str(text).map_err(|e| RulesError::from_toml(text, e))?;
    let mut ids = BTreeSet::new();
    let mut out = Vec::with_capacity(file.rule.len());
    for entry in file.rule {
        let id_line = line_of(text, entry.id.span().start);
        let id = entry.id.into_inner();
        if id.trim().is_empty() {
            return Err(RulesError::Invalid {
                line: id_line,
                message: "rule id is empty".into(),
            });
        }
        if !ids.insert(id.clone()) {
            return Err(RulesError::Invalid {
                line: id_line,
                message: format!("duplicate rule id `{id}`"),
            });
        }
        let phrases_line = line_of(text, entry.phrases.span().start);
        let phrases = entry.phrases.into_inner();
        if phrases.is_empty() || phrases.iter().any(|p| p.trim().is_empty()) {
            return Err(RulesError::Invalid {
                line: phrases_line,
                message: format!("rule `{id}` needs at least one non-empty phrase"),
            });
        }
        let kind_line = line_of(text, entry.kind.span().start);
        let kind = entry.kind.into_inner();
        let (payload_line, payload) = match entry.payload {
            Some(p) => (
                line_of(text, p.span().start),
                p.into_inner()
                    .into_iter()
                    .map(|(k, v)| (k, toml_to_json(v)))
                    .collect(),
            ),
            None => (kind_line, BTreeMap::new()),
        };
        kind.validate_payload(&payload)
            .map_err(|message| RulesError::Invalid {
                line: payload_line,
                message: format!("rule `{id}`: {message}"),
            })?;
        out.push(TriggerRule {
            rule_id: id,
            phrases,
            event: EventTemplate { kind, payload },
            priority: entry.priority,
            cooldown: entry
                .cooldown_ms
                .map_or(DEFAULT_COOLDOWN, Duration::from_millis),
        });
    }
    Ok(out)
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<TriggerRule>, RulesError> {
    let text = std::fs::read_to_string(path)?;
    parse_rules(&text)
}

/// The shipped keyword bindings.
pub fn standard_rules() -> Vec<TriggerRule> {
    parse_rules(STANDARD_RULES).expect("bundled rules are valid")
}
