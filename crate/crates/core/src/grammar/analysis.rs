use std::collections::{BTreeMap, BTreeSet};

use super::Expr;

/// Rules that can derive the empty string.
pub(crate) fn nullable_rules(rules: &BTreeMap<String, Expr>) -> BTreeSet<String> {
    fixpoint(rules, nullable)
}

/// Rules whose language is non-empty.
pub(crate) fn productive_rules(rules: &BTreeMap<String, Expr>) -> BTreeSet<String> {
    fixpoint(rules, productive)
}

fn fixpoint(
    rules: &BTreeMap<String, Expr>,
    holds: fn(&Expr, &BTreeSet<String>) -> bool,
) -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    loop {
        let mut changed = false;
        for (name, expr) in rules {
            if !set.contains(name) && holds(expr, &set) {
                set.insert(name.clone());
                changed = true;
            }
        }
        if !changed {
            return set;
        }
    }
}

pub(crate) fn nullable(expr: &Expr, nullable_rules: &BTreeSet<String>) -> bool {
    match expr {
        Expr::Literal(s) => s.is_empty(),
        Expr::CharClass { .. } => false,
        Expr::RuleRef(n) => nullable_rules.contains(n),
        Expr::Sequence(items) => items.iter().all(|e| nullable(e, nullable_rules)),
        Expr::Alternation(items) => items.iter().any(|e| nullable(e, nullable_rules)),
        Expr::Repeat { expr, kind } => kind.min() == 0 || nullable(expr, nullable_rules),
    }
}

pub(crate) fn productive(expr: &Expr, productive_rules: &BTreeSet<String>) -> bool {
    match expr {
        Expr::Literal(_) => true,
        Expr::CharClass { negated, ranges } => {
            if *negated {
                // Some character lies outside any finite set of ranges
                // unless the ranges cover all of Unicode.
                !covers_everything(ranges)
            } else {
                !ranges.is_empty()
            }
        }
        Expr::RuleRef(n) => productive_rules.contains(n),
        Expr::Sequence(items) => items.iter().all(|e| productive(e, productive_rules)),
        Expr::Alternation(items) => items.iter().any(|e| productive(e, productive_rules)),
        Expr::Repeat { expr, kind } => kind.min() == 0 || productive(expr, productive_rules),
    }
}

fn covers_everything(ranges: &[(char, char)]) -> bool {
    let mut sorted: Vec<(u32, u32)> = ranges.iter().map(|&(a, b)| (a as u32, b as u32)).collect();
    sorted.sort_unstable();
    let mut next = 0u32;
    for (lo, hi) in sorted {
        if lo > next {
            // Surrogates are not chars; skip the gap if that is all it is.
            if !(next == 0xD800 && lo <= 0xE000) {
                return false;
            }
        }
        next = next.max(hi + 1);
    }
    next > 0x10FFFF
}

pub(crate) fn undefined_references(rules: &BTreeMap<String, Expr>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (name, expr) in rules {
        let mut refs = BTreeSet::new();
        collect_refs(expr, &mut refs);
        for r in refs {
            if !rules.contains_key(&r) {
                out.push((name.clone(), r));
            }
        }
    }
    out
}

fn collect_refs(expr: &Expr, out: &mut BTreeSet<String>) {
    match expr {
        Expr::RuleRef(n) => {
            out.insert(n.clone());
        }
        Expr::Sequence(items) | Expr::Alternation(items) => {
            items.iter().for_each(|e| collect_refs(e, out))
        }
        Expr::Repeat { expr, .. } => collect_refs(expr, out),
        Expr::Literal(_) | Expr::CharClass { .. } => {}
    }
}

/// Rules that may be entered at the same input position as `expr` starts.
fn leftmost_refs(expr: &Expr, nullable_rules: &BTreeSet<String>, out: &mut BTreeSet<String>) {
    match expr {
        Expr::RuleRef(n) => {
            out.insert(n.clone());
        }
        Expr::Sequence(items) => {
            for item in items {
                leftmost_refs(item, nullable_rules, out);
                if !nullable(item, nullable_rules) {
                    break;
                }
            }
        }
        Expr::Alternation(items) => items
            .iter()
            .for_each(|e| leftmost_refs(e, nullable_rules, out)),
        Expr::Repeat { expr, .. } => leftmost_refs(expr, nullable_rules, out),
        Expr::Literal(_) | Expr::CharClass { .. } => {}
    }
}

/// Returns a cycle of rule names if any rule can reach itself without
/// consuming input.
pub(crate) fn find_left_recursion(rules: &BTreeMap<String, Expr>) -> Option<Vec<String>> {
    let nullable_set = nullable_rules(rules);
    let edges: BTreeMap<&str, BTreeSet<String>> = rules
        .iter()
        .map(|(name, expr)| {
            let mut out = BTreeSet::new();
            leftmost_refs(expr, &nullable_set, &mut out);
            (name.as_str(), out)
        })
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
    let mut stack: Vec<&str> = Vec::new();

    fn visit<'a>(
        node: &'a str,
        edges: &'a BTreeMap<&'a str, BTreeSet<String>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        marks.insert(node, Mark::Active);
        stack.push(node);
        if let Some(nexts) = edges.get(node) {
            for next in nexts {
                let Some((&next_key, _)) = edges.get_key_value(next.as_str()) else {
                    continue;
                };
                match marks.get(next_key) {
                    Some(Mark::Active) => {
                        let start = stack.iter().position(|&n| n == next_key).unwrap();
                        let mut cycle: Vec<String> =
                            stack[start..].iter().map(|s| s.to_string()).collect();
                        cycle.push(next_key.to_string());
                        return Some(cycle);
                    }
                    Some(Mark::Done) => {}
                    None => {
                        if let Some(c) = visit(next_key, edges, marks, stack) {
                            return Some(c);
                        }
                    }
                }
            }
        }
        stack.pop();
        marks.insert(node, Mark::Done);
        None
    }

    for &name in edges.keys() {
        if !marks.contains_key(name) {
            if let Some(c) = visit(name, &edges, &mut marks, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}
