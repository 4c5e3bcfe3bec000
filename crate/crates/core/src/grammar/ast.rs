use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RepeatKind {
    /// `?`
    Optional,
    /// `*`
    ZeroOrMore,
    /// `+`
    OneOrMore,
}

impl RepeatKind {
    pub fn min(self) -> usize {
        match self {
            RepeatKind::OneOrMore => 1,
            _ => 0,
        }
    }

    pub fn unbounded(self) -> bool {
        !matches!(self, RepeatKind::Optional)
    }

    fn symbol(self) -> char {
        match self {
            RepeatKind::Optional => '?',
            RepeatKind::ZeroOrMore => '*',
            RepeatKind::OneOrMore => '+',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Literal(String),
    CharClass {
        negated: bool,
        ranges: Vec<(char, char)>,
    },
    RuleRef(String),
    Sequence(Vec<Expr>),
    Alternation(Vec<Expr>),
    Repeat {
        expr: Box<Expr>,
        kind: RepeatKind,
    },
}

impl Expr {
    pub fn literal(s: impl Into<String>) -> Self {
        Expr::Literal(s.into())
    }

    pub fn class_matches(negated: bool, ranges: &[(char, char)], c: char) -> bool {
        let inside = ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi);
        inside != negated
    }

    fn write_to(&self, out: &mut String, ctx: Ctx) {
        match self {
            Expr::Literal(s) => {
                out.push('"');
                for c in s.chars() {
                    escape_into(out, c, &['"']);
                }
                out.push('"');
            }
            Expr::CharClass { negated, ranges } => {
                out.push('[');
                if *negated {
                    out.push('^');
                }
                for (i, &(lo, hi)) in ranges.iter().enumerate() {
                    let specials: &[char] = if i == 0 && !negated {
                        &[']', '-', '^']
                    } else {
                        &[']', '-']
                    };
                    escape_into(out, lo, specials);
                    if hi != lo {
                        out.push('-');
                        escape_into(out, hi, &[']', '-', '^']);
                    }
                }
                out.push(']');
            }
            Expr::RuleRef(name) => out.push_str(name),
            Expr::Sequence(items) => {
                let wrap = matches!(ctx, Ctx::Sequence | Ctx::Repeat);
                if wrap {
                    out.push('(');
                }
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    item.write_to(out, Ctx::Sequence);
                }
                if wrap {
                    out.push(')');
                }
            }
            Expr::Alternation(items) => {
                let wrap = !matches!(ctx, Ctx::Top);
                if wrap {
                    out.push('(');
                }
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" | ");
                    }
                    item.write_to(out, Ctx::Alternative);
                }
                if wrap {
                    out.push(')');
                }
            }
            Expr::Repeat { expr, kind } => {
                expr.write_to(out, Ctx::Repeat);
                out.push(kind.symbol());
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Ctx {
    Top,
    Alternative,
    Sequence,
    Repeat,
}

fn escape_into(out: &mut String, c: char, specials: &[char]) {
    match c {
        '\\' => out.push_str("\\\\"),
        '\n' => out.push_str("\\n"),
        '\r' => out.push_str("\\r"),
        '\t' => out.push_str("\\t"),
        c if specials.contains(&c) => {
            out.push('\\');
            out.push(c);
        }
        c if c.is_control() => {
            let _ = write!(out, "\\u{:04X}", c as u32);
        }
        c => out.push(c),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_to(&mut s, Ctx::Top);
        f.write_str(&s)
    }
}

/// A validated grammar: every reference resolves, `root` exists and no rule
/// can reach itself without consuming input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub(crate) rules: BTreeMap<String, Expr>,
    pub(crate) root: String,
}

impl Grammar {
    pub fn rules(&self) -> &BTreeMap<String, Expr> {
        &self.rules
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn rule(&self, name: &str) -> Option<&Expr> {
        self.rules.get(name)
    }

    /// Canonical GBNF text: the root rule first, the rest by name.
    pub fn to_gbnf(&self) -> String {
        let mut out = String::new();
        let ordered = self
            .rules
            .get_key_value(&self.root)
            .into_iter()
            .chain(self.rules.iter().filter(|(k, _)| **k != self.root));
        for (name, expr) in ordered {
            out.push_str(name);
            out.push_str(" ::= ");
            expr.write_to(&mut out, Ctx::Top);
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_gbnf())
    }
}
