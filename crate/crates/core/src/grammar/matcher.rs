//! Memoized recursive descent over sets of end positions.
//!
//! `ends(e, i)` is the set of positions `j` such that `input[i..j]` derives
//! from `e`. Left recursion is rejected at parse time, so every recursive
//! call either consumes input or descends into a strictly smaller rule
//! graph, which keeps the evaluation finite.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use super::analysis::{productive, productive_rules};
use super::{Expr, Grammar};

pub(crate) fn matches(grammar: &Grammar, candidate: &str) -> bool {
    let input: Vec<char> = candidate.chars().collect();
    let mut run = Run::new(grammar, &input, false);
    let root = grammar.rules.get(&grammar.root).expect("validated root");
    run.ends(root, 0).contains(&input.len())
}

pub(crate) fn prefix_valid(grammar: &Grammar, prefix: &str) -> bool {
    let input: Vec<char> = prefix.chars().collect();
    let mut run = Run::new(grammar, &input, true);
    let root = grammar.rules.get(&grammar.root).expect("validated root");
    run.ends(root, 0).contains(&input.len())
}

struct Run<'a> {
    grammar: &'a Grammar,
    input: &'a [char],
    /// In prefix mode reaching the end of input counts as success as long
    /// as the remaining grammar can still produce something.
    prefix: bool,
    productive: BTreeSet<String>,
    memo: HashMap<(&'a str, usize), Rc<Vec<usize>>>,
}

impl<'a> Run<'a> {
    fn new(grammar: &'a Grammar, input: &'a [char], prefix: bool) -> Self {
        let productive = if prefix {
            productive_rules(&grammar.rules)
        } else {
            BTreeSet::new()
        };
        Run {
            grammar,
            input,
            prefix,
            productive,
            memo: HashMap::new(),
        }
    }

    fn ends(&mut self, expr: &'a Expr, pos: usize) -> Vec<usize> {
        let n = self.input.len();
        if self.prefix && pos == n {
            return if productive(expr, &self.productive) {
                vec![n]
            } else {
                Vec::new()
            };
        }
        match expr {
            Expr::Literal(lit) => {
                let mut i = pos;
                for c in lit.chars() {
                    if i == n {
                        return if self.prefix { vec![n] } else { Vec::new() };
                    }
                    if self.input[i] != c {
                        return Vec::new();
                    }
                    i += 1;
                }
                vec![i]
            }
            Expr::CharClass { negated, ranges } => {
                if pos < n && Expr::class_matches(*negated, ranges, self.input[pos]) {
                    vec![pos + 1]
                } else {
                    Vec::new()
                }
            }
            Expr::RuleRef(name) => {
                let (key, body) = self
                    .grammar
                    .rules
                    .get_key_value(name.as_str())
                    .expect("validated reference");
                if let Some(hit) = self.memo.get(&(key.as_str(), pos)) {
                    return hit.as_ref().clone();
                }
                let out = stacker::maybe_grow(64 * 1024, 4 * 1024 * 1024, || self.ends(body, pos));
                self.memo.insert((key.as_str(), pos), Rc::new(out.clone()));
                out
            }
            Expr::Sequence(items) => {
                let mut current = vec![pos];
                for item in items {
                    let mut next = Vec::new();
                    for &p in &current {
                        next.extend(self.ends(item, p));
                    }
                    if next.is_empty() {
                        return next;
                    }
                    sort_dedup(&mut next);
                    current = next;
                }
                current
            }
            Expr::Alternation(items) => {
                let mut all = Vec::new();
                for item in items {
                    all.extend(self.ends(item, pos));
                }
                sort_dedup(&mut all);
                all
            }
            Expr::Repeat { expr, kind } => {
                let mut result = BTreeSet::new();
                if kind.min() == 0 {
                    result.insert(pos);
                }
                let first = self.ends(expr, pos);
                let mut frontier: Vec<usize> = Vec::new();
                let mut seen = BTreeSet::from([pos]);
                for p in first {
                    result.insert(p);
                    if seen.insert(p) {
                        frontier.push(p);
                    }
                }
                if kind.unbounded() {
                    while let Some(p) = frontier.pop() {
                        for q in self.ends(expr, p) {
                            result.insert(q);
                            if seen.insert(q) {
                                frontier.push(q);
                            }
                        }
                    }
                }
                result.into_iter().collect()
            }
        }
    }
}

fn sort_dedup(v: &mut Vec<usize>) {
    v.sort_unstable();
    v.dedup();
}
