use super::{AgentConfig, AgentTrace, ChatBackend, ChatMessage, ConversationHistory, Stage, StageRun};

/// The responder sees at most this many retrieved paragraphs.
pub const MAX_CONTEXT_PARAGRAPHS: usize = 2;

/// Full responder prompt: persona system message, history turns, then one
/// user message holding the context blocks and the raw query.
///
/// Paragraphs beyond [`MAX_CONTEXT_PARAGRAPHS`] and repeats are dropped.
pub fn build_responder_messages(
    query: &str,
    paragraphs: &[&str],
    visual_description: Option<&str>,
    history: &ConversationHistory,
    cfg: &AgentConfig,
) -> Vec<ChatMessage> {
    let mut messages = Vec::with_capacity(2 + 2 * history.len());
    messages.push(ChatMessage::system(cfg.prompts.responder_system()));
    for turn in history.turns() {
        messages.push(ChatMessage::user(turn.user.clone()));
        messages.push(ChatMessage::assistant(turn.ocean.clone()));
    }

    let mut body = String::new();
    if let Some(desc) = visual_description.map(str::trim).filter(|d| !d.is_empty()) {
        body.push_str("[VISUAL]\n");
        body.push_str(desc);
        body.push_str("\n\n");
    }
    let mut kept: Vec<&str> = Vec::with_capacity(MAX_CONTEXT_PARAGRAPHS);
    for p in paragraphs.iter().map(|p| p.trim()) {
        if kept.len() == MAX_CONTEXT_PARAGRAPHS {
            break;
        }
        if !p.is_empty() && !kept.contains(&p) {
            kept.push(p);
        }
    }
    for (i, p) in kept.iter().enumerate() {
        body.push_str(&format!("[PASSAGE {}]\n{}\n\n", i + 1, p));
    }
    body.push_str(query.trim());
    messages.push(ChatMessage::user(body));
    messages
}

/// Answers as the Ocean and records the turn in `history`. Falls back to
/// the configured canned reply when the backend fails or stays empty.
pub fn respond(
    backend: &dyn ChatBackend,
    query: &str,
    paragraphs: &[&str],
    visual_description: Option<&str>,
    history: &mut ConversationHistory,
    cfg: &AgentConfig,
) -> (String, AgentTrace) {
    let mut run = StageRun::new(Stage::Responder, cfg.retry);
    let canned = cfg.prompts.canned_reply.trim().to_string();
    if query.trim().is_empty() {
        run.fail("empty query");
        return (canned, run.finish());
    }
    let messages = build_responder_messages(query, paragraphs, visual_description, history, cfg);
    let mut retried_empty = false;
    let text = loop {
        match run.call(backend, &messages, &cfg.params.responder) {
            Ok(raw) if !raw.trim().is_empty() => break raw.trim().to_string(),
            Ok(_) => {
                if !retried_empty && run.budget.take() {
                    retried_empty = true;
                    continue;
                }
                run.fail("empty completion");
                break canned;
            }
            Err(e) => {
                tracing::warn!(error = %e, "responder failed, using the canned reply");
                break canned;
            }
        }
    };
    history.push(query.trim(), text.clone());
    (text, run.finish())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::agents::{EchoBackend, MockBackend, RecordingBackend};

    #[test]
    fn no_context_blocks_without_context() {
        let cfg = AgentConfig::default();
        let b = RecordingBackend::new(Arc::new(EchoBackend));
        let mut h = ConversationHistory::default();
        let (text, _) = respond(&b, "who are you?", &[], None, &mut h, &cfg);
        assert_eq!(text, "who are you?");
        let prompt = b.last_prompt().unwrap();
        let user = &prompt.last().unwrap().content;
        assert!(!user.contains("[VISUAL]") && !user.contains("[PASSAGE"));
    }

    #[test]
    fn two_paragraphs_each_once() {
        let cfg = AgentConfig::default();
        let b = RecordingBackend::new(Arc::new(EchoBackend));
        let mut h = ConversationHistory::default();
        let paras = ["The lagoon was a garden.", "Salt marshes breathe."];
        respond(&b, "q", &paras, Some("Sea surface temperature."), &mut h, &cfg);
        let user = b.last_prompt().unwrap().last().unwrap().content.clone();
        for p in paras {
            assert_eq!(user.matches(p).count(), 1);
        }
        assert!(user.starts_with("[VISUAL]\nSea surface temperature."));
        assert!(user.ends_with("\n\nq"));
    }

    #[test]
    fn extra_and_repeated_paragraphs_dropped() {
        let cfg = AgentConfig::default();
        let h = ConversationHistory::default();
        let m = build_responder_messages("q", &["a", "a", "b", "c"], None, &h, &cfg);
        let user = &m.last().unwrap().content;
        assert_eq!(user, "[PASSAGE 1]\na\n\n[PASSAGE 2]\nb\n\nq");
    }

    #[test]
    fn history_cap_keeps_last_six() {
        let cfg = AgentConfig::default();
        let b = RecordingBackend::new(Arc::new(EchoBackend));
        let mut h = ConversationHistory::with_cap(6);
        for i in 1..=10 {
            respond(&b, &format!("turn {i}"), &[], None, &mut h, &cfg);
        }
        respond(&b, "next", &[], None, &mut h, &cfg);
        let prompt = b.last_prompt().unwrap();
        let n = prompt.len();
        let users: Vec<&str> = prompt[1..n - 1]
            .iter()
            .filter(|m| m.role == crate::agents::Role::User)
            .map(|m| m.content.as_str())
            .collect();
        let expected: Vec<String> = (5..=10).map(|i| format!("turn {i}")).collect();
        assert_eq!(users, expected);
    }

    #[test]
    fn empty_completion_retries_once_then_cans() {
        let cfg = AgentConfig::default();
        let b = RecordingBackend::new(Arc::new(MockBackend::new("   ")));
        let mut h = ConversationHistory::default();
        let (text, trace) = respond(&b, "q", &[], None, &mut h, &cfg);
        assert_eq!(text, cfg.prompts.canned_reply.trim());
        assert_eq!(b.prompts().len(), 2);
        assert_eq!(trace.retries, 1);
    }
}
