use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{line_of, RulesError};
use crate::grammar::{grammar_from_tokens, Grammar};

/// Sentinel selection meaning "no central visual".
pub const NONE_TOKEN: &str = "NONE";

const STANDARD_CATALOG: &str = include_str!("../../assets/catalog.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisualKind {
    GlobeLayer,
    VideoOverlay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualCatalogEntry {
    pub token: String,
    pub title: String,
    pub description: String,
    pub kind: VisualKind,
    pub asset_ref: String,
}

/// Closed registry of prepared visuals, keyed by selection token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisualCatalog {
    entries: Vec<VisualCatalogEntry>,
}

#[derive(Deserialize)]
struct CatalogFile {
    #[serde(default)]
    visual: Vec<toml::Spanned<VisualCatalogEntry>>,
}

pub fn is_grammar_safe_token(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl VisualCatalog {
    pub fn new(entries: Vec<VisualCatalogEntry>) -> Result<Self, RulesError> {
        Self::validate(entries.into_iter().map(|e| (0, e)).collect())
    }

    fn validate(entries: Vec<(usize, VisualCatalogEntry)>) -> Result<Self, RulesError> {
        if entries.is_empty() {
            return Err(RulesError::Invalid {
                line: 0,
                message: "visual catalog is empty".into(),
            });
        }
        let mut seen = BTreeSet::new();
        for (line, e) in &entries {
            let fail = |message: String| RulesError::Invalid {
                line: *line,
                message,
            };
            if !is_grammar_safe_token(&e.token) {
                return Err(fail(format!("token `{}` must match [A-Z0-9_]+", e.token)));
            }
            if e.token == NONE_TOKEN {
                return Err(fail(format!("`{NONE_TOKEN}` is reserved")));
            }
            if !seen.insert(e.token.clone()) {
                return Err(fail(format!("duplicate token `{}`", e.token)));
            }
            if e.description.trim().is_empty() {
                return Err(fail(format!("`{}` has an empty description", e.token)));
            }
        }
        Ok(VisualCatalog {
            entries: entries.into_iter().map(|(_, e)| e).collect(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, RulesError> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| RulesError::from_toml(text, e))?;
        Self::validate(
            file.visual
                .into_iter()
                .map(|s| (line_of(text, s.span().start), s.into_inner()))
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RulesError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// The shipped catalog: five globe layers and four video overlays.
    pub fn standard() -> Self {
        Self::from_toml(STANDARD_CATALOG).expect("bundled catalog is valid")
    }

    pub fn entries(&self) -> &[VisualCatalogEntry] {
        &self.entries
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.token.as_str())
    }

    pub fn get(&self, token: &str) -> Option<&VisualCatalogEntry> {
        self.entries.iter().find(|e| e.token == token)
    }

    /// Grammar accepting exactly the catalog tokens plus [`NONE_TOKEN`].
    pub fn selection_grammar(&self) -> Grammar {
        let mut tokens: Vec<&str> = self.tokens().collect();
        tokens.push(NONE_TOKEN);
        grammar_from_tokens(&tokens).expect("catalog tokens are distinct and non-empty")
    }
}

/// Exact-match lookup of a selection token. `NONE` resolves to nothing;
/// any other unknown token is logged as an integrity warning.
pub fn resolve_visual<'a>(
    token: &str,
    catalog: &'a VisualCatalog,
) -> Option<&'a VisualCatalogEntry> {
    if token == NONE_TOKEN {
        return None;
    }
    let found = catalog.get(token);
    if found.is_none() {
        tracing::warn!(token, "visual selection token not in catalog");
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_catalog_contents() {
        let c = VisualCatalog::standard();
        let tokens: Vec<&str> = c.tokens().collect();
        for t in ["CO2", "CHLOROPHYLL", "SST", "CURRENTS", "KD"] {
            assert!(tokens.contains(&t), "{t}");
            assert_eq!(c.get(t).unwrap().kind, VisualKind::GlobeLayer);
        }
        assert_eq!(
            c.entries().iter().filter(|e| e.kind == VisualKind::VideoOverlay).count(),
            4
        );
    }

    #[test]
    fn resolve() {
        let c = VisualCatalog::standard();
        assert_eq!(resolve_visual("SST", &c).unwrap().token, "SST");
        assert!(resolve_visual("NONE", &c).is_none());
        assert!(resolve_visual("sst", &c).is_none());
        assert!(resolve_visual("\u{0}weird", &c).is_none());
    }

    #[test]
    fn rejects_bad_entries_with_line() {
        let text = "[[visual]]\ntoken = \"A\"\ntitle = \"a\"\ndescription = \"d\"\nkind = \"globe-layer\"\nasset_ref = \"x\"\n\n[[visual]]\ntoken = \"bad token\"\ntitle = \"b\"\ndescription = \"d\"\nkind = \"globe-layer\"\nasset_ref = \"y\"\n";
        match VisualCatalog::from_toml(text).unwrap_err() {
            RulesError::Invalid { line, .. } => assert_eq!(line, 8),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn selection_grammar_includes_none() {
        let g = VisualCatalog::standard().selection_grammar();
        assert!(g.matches("NONE") && g.matches("KD"));
        assert!(!g.matches("KD2"));
    }
}
