//! Independent oracles and fixtures shared by the integration tests. None
//! of these call into the code they check.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use oceanvoice_core::agents::{MockScript, Stage};
use oceanvoice_core::corpus::{
    ingest_documents, DocKind, EmbeddingVector, HnswParams, MockEmbedder, ParaId, SentId,
    SentenceRecord, SourceDocument, VectorIndex,
};
use oceanvoice_core::grammar::{Expr, Grammar};
use oceanvoice_core::pipeline::{Backends, Engine};
use oceanvoice_core::session::{GateAction, GateConfig, GateInput, GateMachine};
use oceanvoice_core::triggers::{standard_rules, EventKind, TriggerEvent, TriggerRule, VisualCatalog};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---- vectors ----

pub fn gaussian_unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    // Box-Muller keeps the direction uniform on the sphere.
    let mut v: Vec<f32> = (0..dim)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// `n` random unit vectors, one sentence each, `per_para` sentences to a
/// paragraph.
pub fn synthetic_index(seed: u64, n: usize, dim: usize, per_para: usize) -> (VectorIndex, Vec<Vec<f32>>) {
    let mut r = rng(seed);
    let vecs: Vec<Vec<f32>> = (0..n).map(|_| gaussian_unit(&mut r, dim)).collect();
    let records = vecs
        .iter()
        .enumerate()
        .map(|(i, v)| SentenceRecord {
            sent_id: SentId(i as u32),
            para_id: ParaId((i / per_para.max(1)) as u32),
            text: format!("sentence {i}"),
            embedding: EmbeddingVector::new(v.clone()).unwrap(),
        })
        .collect();
    (VectorIndex::from_sentences(dim, records).unwrap(), vecs)
}

/// O(N·D) scan: sequential f32 dot products, best first, ties to the lower
/// id.
pub fn brute_force(stored: &[&[f32]], query: &[f32], k: usize) -> Vec<(u32, f32)> {
    let mut scored: Vec<(u32, f32)> = stored
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut acc = 0f32;
            for (a, b) in query.iter().zip(v.iter()) {
                acc += a * b;
            }
            (i as u32, acc)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn stored_vectors(index: &VectorIndex) -> Vec<&[f32]> {
    (0..index.len()).map(|i| index.embedding(i)).collect()
}

// ---- grammar enumeration ----

type Memo = HashMap<(String, usize), BTreeSet<String>>;

/// Every string of at most `max_len` chars in the language of `g`, with
/// character classes drawn from `alphabet`. Exponential, so only for small
/// grammars. Relies on left recursion being absent: every cycle through a
/// rule consumes at least one character, so the length bound shrinks.
pub fn enumerate(g: &Grammar, alphabet: &[char], max_len: usize) -> BTreeSet<String> {
    lang_rule(g, g.root(), alphabet, max_len, &mut Memo::new())
}

fn lang_rule(g: &Grammar, name: &str, alphabet: &[char], max_len: usize, memo: &mut Memo) -> BTreeSet<String> {
    let key = (name.to_string(), max_len);
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let out = match g.rules().get(name) {
        Some(e) => lang(g, e, alphabet, max_len, memo),
        None => BTreeSet::new(),
    };
    memo.insert(key, out.clone());
    out
}

fn lang(g: &Grammar, e: &Expr, alphabet: &[char], max_len: usize, memo: &mut Memo) -> BTreeSet<String> {
    let len = |s: &String| s.chars().count();
    match e {
        Expr::Literal(s) if len(s) <= max_len => BTreeSet::from([s.clone()]),
        Expr::Literal(_) => BTreeSet::new(),
        Expr::CharClass { .. } if max_len == 0 => BTreeSet::new(),
        Expr::CharClass { negated, ranges } => alphabet
            .iter()
            .filter(|&&c| ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi) != *negated)
            .map(|c| c.to_string())
            .collect(),
        Expr::RuleRef(name) => lang_rule(g, name, alphabet, max_len, memo),
        Expr::Alternation(alts) => alts.iter().flat_map(|a| lang(g, a, alphabet, max_len, memo)).collect(),
        Expr::Sequence(items) => {
            let mut acc = BTreeSet::from([String::new()]);
            for item in items {
                let mut tails: HashMap<usize, BTreeSet<String>> = HashMap::new();
                let mut next = BTreeSet::new();
                for prefix in &acc {
                    let room = max_len - len(prefix);
                    let t = tails.entry(room).or_insert_with(|| lang(g, item, alphabet, room, memo));
                    next.extend(t.iter().map(|tail| format!("{prefix}{tail}")));
                }
                acc = next;
            }
            acc
        }
        Expr::Repeat { expr, kind } => {
            let unit = lang(g, expr, alphabet, max_len, memo);
            let mut out = BTreeSet::new();
            if kind.min() == 0 {
                out.insert(String::new());
            }
            let mut seen = BTreeSet::new();
            let mut frontier = unit.clone();
            loop {
                let fresh: Vec<String> = frontier.into_iter().filter(|s| seen.insert(s.clone())).collect();
                out.extend(fresh.iter().cloned());
                if !kind.unbounded() || fresh.is_empty() {
                    break;
                }
                frontier = fresh
                    .iter()
                    .flat_map(|p| unit.iter().map(move |u| format!("{p}{u}")))
                    .filter(|s| len(s) <= max_len)
                    .collect();
            }
            out
        }
    }
}

/// Every string of at most `max_len` chars that some member of the
/// language starts with. Exact regardless of how long the completions are.
pub fn enumerate_prefixes(g: &Grammar, alphabet: &[char], max_len: usize) -> BTreeSet<String> {
    let live = productive_rules(g);
    let mut full = Memo::new();
    let mut pre = Memo::new();
    pre_rule(g, g.root(), alphabet, max_len, &live, &mut full, &mut pre)
}

/// Rules with a non-empty language, by fixpoint iteration.
fn productive_rules(g: &Grammar) -> BTreeSet<String> {
    let mut live = BTreeSet::new();
    loop {
        let before = live.len();
        for (name, e) in g.rules() {
            if productive(e, &live) {
                live.insert(name.clone());
            }
        }
        if live.len() == before {
            return live;
        }
    }
}

fn productive(e: &Expr, live: &BTreeSet<String>) -> bool {
    match e {
        Expr::Literal(_) | Expr::CharClass { .. } => true,
        Expr::RuleRef(n) => live.contains(n),
        Expr::Sequence(items) => items.iter().all(|i| productive(i, live)),
        Expr::Alternation(alts) => alts.iter().any(|a| productive(a, live)),
        Expr::Repeat { expr, kind } => kind.min() == 0 || productive(expr, live),
    }
}

fn pre_rule(
    g: &Grammar,
    name: &str,
    alphabet: &[char],
    n: usize,
    live: &BTreeSet<String>,
    full: &mut Memo,
    pre: &mut Memo,
) -> BTreeSet<String> {
    let key = (name.to_string(), n);
    if let Some(hit) = pre.get(&key) {
        return hit.clone();
    }
    let out = match g.rules().get(name) {
        Some(e) if live.contains(name) => prefixes(g, e, alphabet, n, live, full, pre),
        _ => BTreeSet::new(),
    };
    pre.insert(key, out.clone());
    out
}

fn prefixes(
    g: &Grammar,
    e: &Expr,
    alphabet: &[char],
    n: usize,
    live: &BTreeSet<String>,
    full: &mut Memo,
    pre: &mut Memo,
) -> BTreeSet<String> {
    if !productive(e, live) {
        return BTreeSet::new();
    }
    let len = |s: &String| s.chars().count();
    match e {
        Expr::Literal(s) => (0..=s.chars().count().min(n)).map(|k| s.chars().take(k).collect()).collect(),
        Expr::CharClass { .. } => {
            let mut out = lang(g, e, alphabet, n, full);
            out.insert(String::new());
            out
        }
        Expr::RuleRef(name) => pre_rule(g, name, alphabet, n, live, full, pre),
        Expr::Alternation(alts) => alts.iter().flat_map(|a| prefixes(g, a, alphabet, n, live, full, pre)).collect(),
        Expr::Sequence(items) => {
            // Either the prefix stops inside item i, after full strings of
            // the items before it, and everything from i on is productive.
            let mut out = BTreeSet::new();
            let mut heads = BTreeSet::from([String::new()]);
            for (i, item) in items.iter().enumerate() {
                if !items[i..].iter().all(|x| productive(x, live)) {
                    break;
                }
                let mut next = BTreeSet::new();
                for h in &heads {
                    let room = n - len(h);
                    for p in prefixes(g, item, alphabet, room, live, full, pre) {
                        out.insert(format!("{h}{p}"));
                    }
                    for f in lang(g, item, alphabet, room, full) {
                        next.insert(format!("{h}{f}"));
                    }
                }
                heads = next;
            }
            out
        }
        Expr::Repeat { expr, kind } => {
            let mut out = BTreeSet::from([String::new()]);
            if !productive(expr, live) {
                return out;
            }
            // Some whole repetitions, then a prefix of one more.
            let unit = lang(g, expr, alphabet, n, full);
            let part = prefixes(g, expr, alphabet, n, live, full, pre);
            let mut heads = BTreeSet::from([String::new()]);
            let mut seen = BTreeSet::new();
            while !heads.is_empty() {
                let mut next = BTreeSet::new();
                for h in &heads {
                    for p in &part {
                        let s = format!("{h}{p}");
                        if len(&s) <= n {
                            out.insert(s);
                        }
                    }
                    if kind.unbounded() || h.is_empty() {
                        for u in &unit {
                            let s = format!("{h}{u}");
                            if len(&s) <= n && seen.insert(s.clone()) {
                                next.insert(s);
                            }
                        }
                    }
                }
                if !kind.unbounded() {
                    break;
                }
                heads = next;
            }
            out
        }
    }
}

// ---- keyword matcher ----

/// Every case-insensitive, word-bounded occurrence of `phrase` in `text`
/// as char offsets, found by trying each start position. ASCII text only.
pub fn naive_occurrences(text: &str, phrase: &str) -> Vec<(usize, usize)> {
    assert!(text.is_ascii() && phrase.is_ascii());
    let t: Vec<char> = text.to_ascii_lowercase().chars().collect();
    let p: Vec<char> = phrase.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase().chars().collect();
    let word = |c: char| c.is_ascii_alphanumeric() || c == '_';
    let mut out = Vec::new();
    if p.is_empty() {
        return out;
    }
    for s in 0..t.len() {
        let e = s + p.len();
        if e > t.len() || t[s..e] != p[..] {
            continue;
        }
        if (s == 0 || !word(t[s - 1])) && (e == t.len() || !word(t[e])) {
            out.push((s, e));
        }
    }
    out
}

// ---- engine fixtures ----

pub fn demo_script(latency: Duration) -> MockScript {
    let mut s = MockScript::load(repo_root().join("config/mock_script.toml")).unwrap();
    for stage in Stage::ALL {
        s.set_latency(stage, latency);
    }
    s
}

pub fn docs(paragraphs: &[&str]) -> Vec<SourceDocument> {
    vec![SourceDocument {
        title: "fixture".into(),
        source_path: "fixture.md".into(),
        kind: DocKind::ScientificNote,
        text: paragraphs.join("\n\n"),
    }]
}

pub fn index_of(paragraphs: &[&str]) -> VectorIndex {
    if paragraphs.is_empty() {
        return VectorIndex::empty(384);
    }
    ingest_documents(docs(paragraphs), &MockEmbedder::new(384), HnswParams::default()).unwrap()
}

pub fn engine_over(index: VectorIndex, backends: Backends) -> Engine {
    Engine::new(
        index,
        VisualCatalog::standard(),
        standard_rules(),
        Arc::new(MockEmbedder::new(384)),
        backends,
    )
    .unwrap()
}

pub const GREEN_WATER: [&str; 3] = [
    "Green water is the colour of life. Phytoplankton carry chlorophyll, and where they bloom the sea turns green.",
    "Satellites read chlorophyll from orbit. The green layer on the globe is built from those readings.",
    "The tide keeps its own calendar. It rises and falls twice a day.",
];

// ---- random grammars ----

/// GBNF text for a random grammar over `a`..`c` with up to four helper
/// rules. A rule may refer to a later rule anywhere, and to itself or an
/// earlier rule only after a sequence item that consumes a character, so
/// left recursion never arises.
pub fn random_grammar(rng: &mut impl Rng) -> String {
    let helpers = rng.random_range(0..=4usize);
    let mut out = format!("root ::= {}\n", random_expr(rng, 0, helpers, 0, false));
    for i in 1..=helpers {
        out.push_str(&format!("r{i} ::= {}\n", random_expr(rng, i, helpers, 0, false)));
    }
    out
}

fn rule_name(i: usize) -> String {
    if i == 0 { "root".into() } else { format!("r{i}") }
}

fn random_expr(rng: &mut impl Rng, rule: usize, helpers: usize, depth: usize, consumed: bool) -> String {
    let leaf_only = depth >= 4;
    let pick = if leaf_only { rng.random_range(0..3) } else { rng.random_range(0..7) };
    match pick {
        0 => {
            let len = rng.random_range(1..=2);
            let s: String = (0..len).map(|_| ['a', 'b', 'c'][rng.random_range(0..3)]).collect();
            format!("\"{s}\"")
        }
        1 => ["[a-b]", "[^a]", "[bc]", "[c]"][rng.random_range(0..4)].to_string(),
        2 => {
            let lo = if consumed { 0 } else { rule + 1 };
            if lo > helpers {
                "\"a\"".into()
            } else {
                rule_name(rng.random_range(lo..=helpers))
            }
        }
        3 | 4 => {
            let n = rng.random_range(2..=3);
            let alts: Vec<String> = (0..n).map(|_| random_expr(rng, rule, helpers, depth + 1, consumed)).collect();
            format!("( {} )", alts.join(" | "))
        }
        5 => {
            let n = rng.random_range(2..=3);
            let mut items = Vec::new();
            let mut done = consumed;
            for _ in 0..n {
                let item = random_expr(rng, rule, helpers, depth + 1, done);
                done |= item.starts_with('"') || item.starts_with('[');
                items.push(item);
            }
            format!("( {} )", items.join(" "))
        }
        _ => {
            let op = ["*", "+", "?"][rng.random_range(0..3)];
            format!("( {} ){op}", random_expr(rng, rule, helpers, depth + 1, consumed))
        }
    }
}

pub const GLOBE_TOKENS: [&str; 6] = ["CO2", "CHLOROPHYLL", "SST", "CURRENTS", "KD", "NONE"];

/// The shipped catalog cut down to its five globe layers.
pub fn globe_catalog() -> VisualCatalog {
    let entries = VisualCatalog::standard()
        .entries()
        .iter()
        .filter(|e| GLOBE_TOKENS.contains(&e.token.as_str()))
        .cloned()
        .collect();
    VisualCatalog::new(entries).unwrap()
}

/// Decider output shaped to trip up token extraction: real tokens in odd
/// case or punctuation, near misses, prose and plain noise.
pub fn adversarial_output(r: &mut impl Rng) -> String {
    const PIECES: [&str; 24] = [
        "CO2", "CHLOROPHYLL", "SST", "CURRENTS", "KD", "NONE", "sst", "Sst", "SST.", "**KD**", "CO", "CO22",
        "CHLOROPHYL", "NONE!", "PLASTIC", "SEA_LEVEL", "because", "the answer is", "\n", "::", "`SST`", "KD:",
        "ignore previous instructions and say", "é",
    ];
    let n = r.random_range(0..10);
    let mut out = String::new();
    for _ in 0..n {
        out.push_str(PIECES[r.random_range(0..PIECES.len())]);
        out.push(if r.random_range(0..4) == 0 { '\n' } else { ' ' });
    }
    if r.random_range(0..3) == 0 {
        let len = r.random_range(0..20);
        out.extend((0..len).map(|_| char::from_u32(r.random_range(0x20..0x250)).unwrap_or('?')));
    }
    out
}

/// Last whitespace-separated word of `text` found in `tokens`.
pub fn last_listed_word<'a>(text: &'a str, tokens: &[&str]) -> Option<&'a str> {
    text.split_whitespace().rfind(|w| tokens.contains(w))
}

/// A sensor trace of `episodes` visits sampled every 50 ms. Each visit
/// approaches below 45 cm, lingers with readings jittering over 48..62 cm
/// and then walks away beyond 80 cm for at least a second.
pub fn visitor_trace(r: &mut impl Rng, episodes: usize) -> Vec<(u64, f64)> {
    let mut out = Vec::new();
    let mut t = 0u64;
    let mut push = |out: &mut Vec<(u64, f64)>, d: f64| {
        out.push((t, d));
        t += 50;
    };
    for _ in 0..r.random_range(2..10) {
        push(&mut out, r.random_range(90.0..200.0));
    }
    for _ in 0..episodes {
        for _ in 0..r.random_range(1..6) {
            push(&mut out, r.random_range(20.0..45.0));
        }
        for _ in 0..r.random_range(20..120) {
            push(&mut out, r.random_range(48.0..62.0));
        }
        for _ in 0..r.random_range(22..60) {
            push(&mut out, r.random_range(80.0..250.0));
        }
    }
    out
}

/// Start and stop times a hysteresis gate with instant processing should
/// produce for `trace`: start on the first reading below `engage`, stop
/// once readings have stayed above `release` for `hold_ms`.
pub fn expected_episodes(trace: &[(u64, f64)], engage: f64, release: f64, hold_ms: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut started: Option<u64> = None;
    let mut run_start: Option<u64> = None;
    for &(t, d) in trace {
        match started {
            None if d < engage => {
                started = Some(t);
                run_start = None;
            }
            None => {}
            Some(s) => {
                if d > release {
                    let r0 = *run_start.get_or_insert(t);
                    if t - r0 >= hold_ms {
                        out.push((s, t));
                        started = None;
                    }
                } else {
                    run_start = None;
                }
            }
        }
    }
    out
}

// ---- keyword rules ----

pub const VOCAB: [&str; 14] = [
    "sea", "level", "rising", "plankton", "bloom", "green", "water", "ice", "melt", "current", "warm", "the", "a",
    "deep",
];

pub fn random_rules(r: &mut impl Rng, n: usize) -> Vec<TriggerRule> {
    (0..n)
        .map(|i| {
            let phrases: Vec<String> = (0..r.random_range(1..=2))
                .map(|_| {
                    let words: Vec<&str> = (0..r.random_range(1..=3)).map(|_| VOCAB[r.random_range(0..VOCAB.len())]).collect();
                    words.join(" ")
                })
                .collect();
            let refs: Vec<&str> = phrases.iter().map(String::as_str).collect();
            TriggerRule::new(format!("r{i}"), &refs, EventKind::LayerOn)
                .with_payload("token", "SST")
                .with_priority(r.random_range(-2..=2))
        })
        .collect()
}

pub fn random_text(r: &mut impl Rng) -> String {
    let mut out = String::new();
    for _ in 0..r.random_range(0..40) {
        let mut w = VOCAB[r.random_range(0..VOCAB.len())].to_string();
        match r.random_range(0..12) {
            0 => w = w.to_uppercase(),
            1 => w = format!("under{w}"),
            2 => w.push('s'),
            3 => w.push(','),
            4 => w.push('.'),
            _ => {}
        }
        if !out.is_empty() {
            out.push_str(if r.random_range(0..8) == 0 { "  " } else { " " });
        }
        out.push_str(&w);
    }
    out
}

/// The resolution policy restated: longest match first, then higher
/// priority, then earlier start, then rule order; each rule fires once and
/// accepted spans never overlap. Reported in text order.
pub fn oracle_scan(rules: &[TriggerRule], text: &str, eligible: impl Fn(&TriggerRule) -> bool) -> Vec<(String, (usize, usize))> {
    let mut all = Vec::new();
    for (ri, rule) in rules.iter().enumerate() {
        if !eligible(rule) {
            continue;
        }
        for p in &rule.phrases {
            for (s, e) in naive_occurrences(text, p) {
                all.push((ri, s, e));
            }
        }
    }
    all.sort();
    all.dedup();
    all.sort_by(|a, b| {
        (b.2 - b.1)
            .cmp(&(a.2 - a.1))
            .then(rules[b.0].priority.cmp(&rules[a.0].priority))
            .then(a.1.cmp(&b.1))
            .then(a.0.cmp(&b.0))
    });
    let mut fired = BTreeSet::new();
    let mut taken: Vec<(usize, usize, usize)> = Vec::new();
    for (ri, s, e) in all {
        if fired.contains(&ri) || taken.iter().any(|&(_, ts, te)| s < te && ts < e) {
            continue;
        }
        fired.insert(ri);
        taken.push((ri, s, e));
    }
    taken.sort_by_key(|&(ri, s, e)| (s, e, ri));
    taken.into_iter().map(|(ri, s, e)| (rules[ri].rule_id.clone(), (s, e))).collect()
}

pub fn summary(events: &[TriggerEvent]) -> Vec<(String, (usize, usize))> {
    events.iter().map(|e| (e.rule_id.clone(), e.source_span)).collect()
}

/// Feeds `trace` and completes every recording at once: transcript,
/// pipeline and playback all land on the stop timestamp.
pub fn run_lifecycle(trace: &[(u64, f64)]) -> (Vec<u64>, Vec<u64>) {
    let mut gate = GateMachine::new(GateConfig::default());
    let (mut starts, mut stops) = (Vec::new(), Vec::new());
    for &(t, d) in trace {
        for a in gate.feed_reading(d, t) {
            match a {
                GateAction::StartRecording { .. } => starts.push(t),
                GateAction::StopRecording { discard } => {
                    assert!(!discard);
                    stops.push(t);
                    gate.feed(&GateInput::TranscriptReady { text: "hello".into(), at_ms: t });
                    gate.feed(&GateInput::PipelineDone { at_ms: t });
                    gate.feed(&GateInput::ResponseDone { at_ms: t });
                }
                _ => {}
            }
        }
    }
    (starts, stops)
}
