use serde::{Deserialize, Serialize};

use crate::corpus::split_sentences;

/// Longest cue in words; longer sentences are broken up.
pub const MAX_CUE_WORDS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtitleCue {
    pub index: usize,
    pub text: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Splits `text` into sentence-sized cues and spreads `duration_ms` over
/// them in proportion to word count. A zero duration still yields cues.
pub fn subtitle_cues(text: &str, duration_ms: u64) -> Vec<SubtitleCue> {
    let text = text.trim();
    if text.is_empty() {
        return Vec::new();
    }
    let sentences = split_sentences(text);
    let mut chunks: Vec<Vec<&str>> = Vec::new();
    for sentence in &sentences {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        for part in words.chunks(MAX_CUE_WORDS) {
            chunks.push(part.to_vec());
        }
    }
    let total_words: u64 = chunks.iter().map(|c| c.len() as u64).sum();
    let mut seen = 0u64;
    chunks
        .into_iter()
        .enumerate()
        .map(|(index, words)| {
            let start_ms = duration_ms * seen / total_words.max(1);
            seen += words.len() as u64;
            let end_ms = duration_ms * seen / total_words.max(1);
            SubtitleCue {
                index,
                text: words.join(" "),
                start_ms,
                end_ms,
            }
        })
        .collect()
}
