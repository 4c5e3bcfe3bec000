use super::{AgentConfig, AgentTrace, ChatBackend, ChatMessage, Stage, StageRun, VisualSelection};
use crate::triggers::VisualCatalog;

/// Picks the central visual for `query`.
///
/// The model reasons freely and the last word accepted by the catalog
/// grammar is taken as the answer. One stricter re-prompt follows a miss;
/// a second miss, or any backend failure, yields `NONE`.
pub fn decide_visual(
    backend: &dyn ChatBackend,
    query: &str,
    catalog: &VisualCatalog,
    cfg: &AgentConfig,
) -> (VisualSelection, AgentTrace) {
    let mut run = StageRun::new(Stage::Decider, cfg.retry);
    if query.trim().is_empty() {
        run.fail("empty query");
        return (VisualSelection::none(), run.finish());
    }
    let grammar = catalog.selection_grammar();
    let params = &cfg.params.decider;
    let system = cfg.prompts.decider_system(catalog);

    let mut messages = vec![ChatMessage::system(system.clone()), ChatMessage::user(query)];
    for attempt in 0..2 {
        if attempt == 1 {
            if !run.budget.take() {
                break;
            }
            let strict = cfg.prompts.decider_strict_text(catalog);
            messages[0] = ChatMessage::system(format!("{system}\n\n{strict}"));
            tracing::debug!("decider output had no valid token, re-prompting");
        }
        let raw = match run.call(backend, &messages, params) {
            Ok(raw) => raw,
            Err(e) => {
                tracing::warn!(error = %e, "decider backend failed, showing no visual");
                return (VisualSelection::none(), run.finish());
            }
        };
        if let Some(token) = grammar.extract_token(&raw) {
            let selection = VisualSelection {
                token: token.to_string(),
                rationale_text: rationale(&raw, token),
            };
            return (selection, run.finish());
        }
    }
    run.fail("no valid selection token");
    (VisualSelection::none(), run.finish())
}

/// The text before the last occurrence of `token`.
fn rationale(raw: &str, token: &str) -> String {
    raw.rfind(token)
        .map_or(raw, |i| &raw[..i])
        .trim()
        .trim_end_matches(':')
        .trim()
        .to_string()
}
