/// Tokens ending in a period that never close a sentence. Compared
/// case-insensitively against the whitespace-delimited word.
pub const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "e.g.", "i.e.", "vs.", "etc.",
    "cf.", "fig.", "figs.", "no.", "approx.", "ca.", "al.", "u.s.", "inc.", "vol.", "pp.",
];

const TERMINALS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

/// Splits raw text into paragraphs separated by one or more blank
/// (whitespace-only) lines.
pub fn split_paragraphs(raw_text: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in raw_text.lines() {
        if line.trim().is_empty() {
            flush(&mut current, &mut paragraphs);
        } else {
            current.push(line);
        }
    }
    flush(&mut current, &mut paragraphs);
    paragraphs
}

fn flush(lines: &mut Vec<&str>, out: &mut Vec<String>) {
    if lines.is_empty() {
        return;
    }
    let joined = lines.join("\n");
    let trimmed = joined.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
    lines.clear();
}

/// Rule-based sentence splitter.
///
/// A sentence ends at a run of `.`, `!` or `?` (optionally followed by
/// closing quotes or brackets) when the run is followed by whitespace and
/// then an uppercase letter, or by the end of the text. A period that
/// ends one of [`ABBREVIATIONS`] never ends a sentence.
pub fn split_sentences(paragraph: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = paragraph.char_indices().collect();
    let n = chars.len();
    let mut sentences = Vec::new();
    let mut start_byte = 0usize;
    let mut i = 0usize;

    while i < n {
        let c = chars[i].1;
        if !TERMINALS.contains(&c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < n && (TERMINALS.contains(&chars[j].1) || CLOSERS.contains(&chars[j].1)) {
            j += 1;
        }
        let run_end_byte = byte_at(&chars, j, paragraph.len());

        if c == '.' && is_abbreviation(paragraph, &chars, i) {
            i = j;
            continue;
        }

        let mut k = j;
        while k < n && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = if j == n || k == n {
            true
        } else if k > j {
            starts_sentence(&chars, k)
        } else {
            false
        };

        if boundary {
            push_trimmed(&mut sentences, &paragraph[start_byte..run_end_byte]);
            start_byte = byte_at(&chars, k, paragraph.len());
        }
        i = j;
    }
    if start_byte < paragraph.len() {
        push_trimmed(&mut sentences, &paragraph[start_byte..]);
    }
    sentences
}

fn byte_at(chars: &[(usize, char)], idx: usize, len: usize) -> usize {
    chars.get(idx).map_or(len, |&(b, _)| b)
}

fn starts_sentence(chars: &[(usize, char)], k: usize) -> bool {
    let c = chars[k].1;
    if c.is_uppercase() {
        return true;
    }
    OPENERS.contains(&c) && chars.get(k + 1).is_some_and(|&(_, d)| d.is_uppercase())
}

fn is_abbreviation(text: &str, chars: &[(usize, char)], dot_idx: usize) -> bool {
    let mut s = dot_idx;
    while s > 0 && !chars[s - 1].1.is_whitespace() {
        s -= 1;
    }
    while s < dot_idx && OPENERS.contains(&chars[s].1) {
        s += 1;
    }
    let word = &text[chars[s].0..chars[dot_idx].0 + 1];
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normalize_ws(s: &str) -> String {
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    // Independent reference: classify each line as blank or not and group.
    fn reference_paragraphs(raw: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut buf = String::new();
        for line in raw.split('\n') {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.chars().all(char::is_whitespace) {
                if !buf.trim().is_empty() {
                    out.push(buf.trim().to_string());
                }
                buf.clear();
            } else {
                if !buf.is_empty() {
                    buf.push('\n');
                }
                buf.push_str(line);
            }
        }
        if !buf.trim().is_empty() {
            out.push(buf.trim().to_string());
        }
        out
    }

    #[test]
    fn paragraphs_basic() {
        assert_eq!(split_paragraphs("A.\n\nB."), vec!["A.", "B."]);
        assert!(split_paragraphs("").is_empty());
        assert!(split_paragraphs("  \n\n \t\n").is_empty());
    }

    #[test]
    fn paragraphs_whitespace_lines_agree_with_reference() {
        let raw = "A.\n \nB.\n\n\nC.";
        assert_eq!(split_paragraphs(raw), vec!["A.", "B.", "C."]);
        assert_eq!(split_paragraphs(raw), reference_paragraphs(raw));
        let raw2 = "  first line\nsecond line  \r\n\t\r\nthird\n\n";
        assert_eq!(split_paragraphs(raw2), reference_paragraphs(raw2));
    }

    #[test]
    fn sentences_basic() {
        assert_eq!(
            split_sentences("The sea rises. It remembers."),
            vec!["The sea rises.", "It remembers."]
        );
        assert_eq!(split_sentences("It was e.g. warm."), vec!["It was e.g. warm."]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(
            split_sentences("Ask Dr. Harrow about it. She knows."),
            vec!["Ask Dr. Harrow about it.", "She knows."]
        );
        assert_eq!(
            split_sentences("Warm vs. Cold is the question."),
            vec!["Warm vs. Cold is the question."]
        );
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(
            split_sentences("Depth is 4.5 km. the rest follows."),
            vec!["Depth is 4.5 km. the rest follows."]
        );
    }

    #[test]
    fn punctuation_runs_and_quotes() {
        assert_eq!(
            split_sentences("Is it rising?! \"Yes,\" said the tide. \"Listen.\" Then quiet."),
            vec!["Is it rising?!", "\"Yes,\" said the tide.", "\"Listen.\"", "Then quiet."]
        );
    }

    #[test]
    fn no_terminal_punctuation_is_one_sentence() {
        assert_eq!(split_sentences("a fragment without end"), vec!["a fragment without end"]);
    }

    #[test]
    fn sentences_rejoin_to_paragraph() {
        let p = "The gyre turns.  Plastic drifts\nnorth. e.g. bottles! And nets?";
        let joined = split_sentences(p).join(" ");
        assert_eq!(normalize_ws(&joined), normalize_ws(p));
    }
}
