use std::collections::BTreeMap;

use super::analysis::{find_left_recursion, undefined_references};
use super::{Expr, Grammar, GrammarError, RepeatKind};

pub const ROOT_RULE: &str = "root";

/// Parses GBNF text: `name ::= body` rules with quoted literals, `[...]`
/// character classes, `|`, grouping, postfix `* + ?` and `#` comments.
pub fn parse_gbnf(source: &str) -> Result<Grammar, GrammarError> {
    let mut p = Parser {
        chars: source.chars().collect(),
        pos: 0,
    };
    let mut rules = BTreeMap::new();
    loop {
        p.skip_trivia();
        if p.eof() {
            break;
        }
        let start = p.pos;
        let name = p.ident().ok_or_else(|| p.error("expected rule name"))?;
        p.skip_trivia();
        if !p.eat_str("::=") {
            return Err(p.error("expected '::='"));
        }
        let body = p.alternation()?;
        if rules.insert(name.clone(), body).is_some() {
            p.pos = start;
            return Err(GrammarError::DuplicateRule(name));
        }
    }
    if rules.is_empty() {
        return Err(p.error("grammar has no rules"));
    }
    validate(rules, ROOT_RULE.to_string())
}

pub(crate) fn validate(rules: BTreeMap<String, Expr>, root: String) -> Result<Grammar, GrammarError> {
    if !rules.contains_key(&root) {
        return Err(GrammarError::MissingRoot(root));
    }
    if let Some((rule, name)) = undefined_references(&rules).into_iter().next() {
        return Err(GrammarError::UndefinedRule { name, rule });
    }
    if let Some(cycle) = find_left_recursion(&rules) {
        return Err(GrammarError::LeftRecursion(cycle));
    }
    Ok(Grammar { rules, root })
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '_'
}

impl Parser {
    fn eof(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn error(&self, message: impl Into<String>) -> GrammarError {
        let upto = &self.chars[..self.pos.min(self.chars.len())];
        let line = upto.iter().filter(|&&c| c == '\n').count() + 1;
        let col = upto.iter().rev().take_while(|&&c| c != '\n').count() + 1;
        GrammarError::Syntax {
            line,
            column: col,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += 1;
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn eat_str(&mut self, s: &str) -> bool {
        let want: Vec<char> = s.chars().collect();
        if self.chars[self.pos..].starts_with(&want) {
            self.pos += want.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        while self.peek().is_some_and(is_ident_char) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.chars[start..self.pos].iter().collect())
    }

    /// True when the upcoming tokens are `name ::=`, i.e. the next rule.
    fn at_rule_start(&self) -> bool {
        let mut i = self.pos;
        while i < self.chars.len() && is_ident_char(self.chars[i]) {
            i += 1;
        }
        if i == self.pos {
            return false;
        }
        while i < self.chars.len() && self.chars[i].is_whitespace() {
            i += 1;
        }
        self.chars[i..].starts_with(&[':', ':', '='])
    }

    fn alternation(&mut self) -> Result<Expr, GrammarError> {
        let mut alts = vec![self.sequence()?];
        loop {
            self.skip_trivia();
            if self.peek() == Some('|') {
                self.pos += 1;
                alts.push(self.sequence()?);
            } else {
                break;
            }
        }
        Ok(if alts.len() == 1 {
            alts.pop().unwrap()
        } else {
            Expr::Alternation(alts)
        })
    }

    fn sequence(&mut self) -> Result<Expr, GrammarError> {
        let mut items = Vec::new();
        loop {
            self.skip_trivia();
            match self.peek() {
                None | Some('|') | Some(')') => break,
                _ if self.at_rule_start() => break,
                _ => items.push(self.postfix()?),
            }
        }
        match items.len() {
            0 => Err(self.error("expected an expression")),
            1 => Ok(items.pop().unwrap()),
            _ => Ok(Expr::Sequence(items)),
        }
    }

    fn postfix(&mut self) -> Result<Expr, GrammarError> {
        let mut expr = self.atom()?;
        loop {
            let kind = match self.peek() {
                Some('*') => RepeatKind::ZeroOrMore,
                Some('+') => RepeatKind::OneOrMore,
                Some('?') => RepeatKind::Optional,
                _ => break,
            };
            self.pos += 1;
            expr = Expr::Repeat {
                expr: Box::new(expr),
                kind,
            };
        }
        Ok(expr)
    }

    fn atom(&mut self) -> Result<Expr, GrammarError> {
        match self.peek() {
            Some('"') => self.literal(),
            Some('[') => self.class(),
            Some('(') => {
                self.pos += 1;
                let inner = self.alternation()?;
                self.skip_trivia();
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if is_ident_char(c) => Ok(Expr::RuleRef(self.ident().unwrap())),
            Some(c) => Err(self.error(format!("unexpected character {c:?}"))),
            None => Err(self.error("unexpected end of grammar")),
        }
    }

    fn escape(&mut self) -> Result<char, GrammarError> {
        let c = self.peek().ok_or_else(|| self.error("unterminated escape"))?;
        self.pos += 1;
        Ok(match c {
            'n' => '\n',
            'r' => '\r',
            't' => '\t',
            'x' => self.hex(2)?,
            'u' => self.hex(4)?,
            'U' => self.hex(8)?,
            other => other,
        })
    }

    fn hex(&mut self, digits: usize) -> Result<char, GrammarError> {
        let end = self.pos + digits;
        if end > self.chars.len() {
            return Err(self.error("truncated hex escape"));
        }
        let s: String = self.chars[self.pos..end].iter().collect();
        let v = u32::from_str_radix(&s, 16).map_err(|_| self.error("invalid hex escape"))?;
        self.pos = end;
        char::from_u32(v).ok_or_else(|| self.error("escape is not a valid character"))
    }

    fn literal(&mut self) -> Result<Expr, GrammarError> {
        self.pos += 1;
        let mut s = String::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated string literal")),
                Some('"') => {
                    self.pos += 1;
                    break;
                }
                Some('\\') => {
                    self.pos += 1;
                    s.push(self.escape()?);
                }
                Some(c) => {
                    self.pos += 1;
                    s.push(c);
                }
            }
        }
        if s.is_empty() {
            return Err(self.error("empty string literal"));
        }
        Ok(Expr::Literal(s))
    }

    fn class_char(&mut self) -> Result<char, GrammarError> {
        match self.peek() {
            None => Err(self.error("unterminated character class")),
            Some('\\') => {
                self.pos += 1;
                self.escape()
            }
            Some(c) => {
                self.pos += 1;
                Ok(c)
            }
        }
    }

    fn class(&mut self) -> Result<Expr, GrammarError> {
        self.pos += 1;
        let negated = if self.peek() == Some('^') {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut ranges = Vec::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated character class")),
                Some(']') => {
                    self.pos += 1;
                    break;
                }
                _ => {
                    let lo = self.class_char()?;
                    let hi = if self.peek() == Some('-')
                        && self.chars.get(self.pos + 1).is_some_and(|&c| c != ']')
                    {
                        self.pos += 1;
                        self.class_char()?
                    } else {
                        lo
                    };
                    if hi < lo {
                        return Err(self.error(format!("inverted range {lo:?}-{hi:?}")));
                    }
                    ranges.push((lo, hi));
                }
            }
        }
        if ranges.is_empty() {
            return Err(self.error("empty character class"));
        }
        Ok(Expr::CharClass { negated, ranges })
    }
}
