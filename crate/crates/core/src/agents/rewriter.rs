use super::{AgentConfig, AgentTrace, ChatBackend, ChatMessage, Stage, StageRun};

pub const REWRITE_MARKER: &str = "REWRITE:";

/// Text after the last [`REWRITE_MARKER`], up to the end of its line,
/// trimmed. `None` when the marker is absent or nothing follows it.
pub fn extract_rewrite(raw: &str) -> Option<&str> {
    let start = raw.rfind(REWRITE_MARKER)? + REWRITE_MARKER.len();
    let rest = &raw[start..];
    let line = rest.split('\n').next().unwrap_or(rest).trim();
    (!line.is_empty()).then_some(line)
}

/// Reformulates a spoken question as a search query. Any failure returns
/// the original query, so the result is never empty for a non-empty input.
pub fn rewrite_query(
    backend: &dyn ChatBackend,
    query: &str,
    cfg: &AgentConfig,
) -> (String, AgentTrace) {
    let mut run = StageRun::new(Stage::Rewriter, cfg.retry);
    if query.trim().is_empty() {
        run.fail("empty query");
        return (query.to_string(), run.finish());
    }
    let messages = [
        ChatMessage::system(cfg.prompts.rewriter_instructions.trim()),
        ChatMessage::user(query),
    ];
    let out = match run.call(backend, &messages, &cfg.params.rewriter) {
        Ok(raw) => match extract_rewrite(&raw) {
            Some(r) => r.to_string(),
            None => {
                run.fail("no rewrite marker");
                query.to_string()
            }
        },
        Err(e) => {
            tracing::warn!(error = %e, "rewriter failed, using the original query");
            query.to_string()
        }
    };
    (out, run.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::MockBackend;

    #[test]
    fn marker_extraction() {
        assert_eq!(
            extract_rewrite("thinking...\nREWRITE: ocean warming effects"),
            Some("ocean warming effects")
        );
        assert_eq!(extract_rewrite("no marker"), None);
        assert_eq!(extract_rewrite("REWRITE:   \n"), None);
        assert_eq!(extract_rewrite("REWRITE: a\nREWRITE: b\nmore words"), Some("b"));
        assert_eq!(extract_rewrite("rewrite: lower"), None);
    }

    #[test]
    fn fail_open() {
        let cfg = AgentConfig::default();
        let b = MockBackend::new("I would rather not.");
        let (q, trace) = rewrite_query(&b, "um, why is the sea green?", &cfg);
        assert_eq!(q, "um, why is the sea green?");
        assert!(trace.error.is_some());

        let b = MockBackend::new("Drop filler.\nREWRITE: green sea color causes");
        assert_eq!(rewrite_query(&b, "um, why?", &cfg).0, "green sea color causes");
    }
}
