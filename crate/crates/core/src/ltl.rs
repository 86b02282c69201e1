//! LTL fragment: abstract syntax, parser and printer.
//!
//! Grammar, loosest to tightest:
//!
//! ```text
//! implies := or ( "->" implies )?
//! or      := and ( ("|" | "||") and )*
//! and     := until ( ("&" | "&&") until )*
//! until   := unary ( "U" until )?
//! unary   := ("!" | "~" | "X" | "F" | "G") unary | ident | "(" implies ")"
//! ```
//!
//! `X`, `F` and `G` act as operators only when followed by something that can
//! start an operand; otherwise they are read as proposition names. `U` is the
//! binary until in infix position and a proposition name elsewhere.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ltl {
    Ap(String),
    Not(Box<Ltl>),
    And(Box<Ltl>, Box<Ltl>),
    Or(Box<Ltl>, Box<Ltl>),
    Implies(Box<Ltl>, Box<Ltl>),
    Next(Box<Ltl>),
    Until(Box<Ltl>, Box<Ltl>),
    Eventually(Box<Ltl>),
    Always(Box<Ltl>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LtlError {
    #[error("unexpected character `{ch}` at position {pos}")]
    Lex { pos: usize, ch: char },
    #[error("unbalanced parenthesis at position {pos}")]
    Unbalanced { pos: usize },
    #[error("expected an operand at position {pos}, found {found}")]
    MissingOperand { pos: usize, found: String },
    #[error("unexpected {found} at position {pos}")]
    Trailing { pos: usize, found: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Not,
    And,
    Or,
    Implies,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Not => "`!`".into(),
            Tok::And => "`&`".into(),
            Tok::Or => "`|`".into(),
            Tok::Implies => "`->`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, LtlError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        match c {
            c if c.is_whitespace() => i += 1,
            '!' | '~' => {
                out.push((Tok::Not, pos));
                i += 1;
            }
            '&' => {
                out.push((Tok::And, pos));
                i += if next == Some('&') { 2 } else { 1 };
            }
            '|' => {
                out.push((Tok::Or, pos));
                i += if next == Some('|') { 2 } else { 1 };
            }
            '-' if next == Some('>') => {
                out.push((Tok::Implies, pos));
                i += 2;
            }
            '(' => {
                out.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, pos));
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let name: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                out.push((Tok::Ident(name), pos));
            }
            other => return Err(LtlError::Lex { pos, ch: other }),
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    /// positions of currently open parentheses
    open: Vec<usize>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.at + offset).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn is_until(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == "U")
    }

    fn implies(&mut self) -> Result<Ltl, LtlError> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.implies()?;
            return Ok(Ltl::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Ltl, LtlError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = Ltl::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Ltl, LtlError> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.until()?;
            lhs = Ltl::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Ltl, LtlError> {
        let lhs = self.unary()?;
        if self.is_until() {
            self.bump();
            let rhs = self.until()?;
            return Ok(Ltl::Until(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn starts_operand(tok: &Tok) -> bool {
        match tok {
            Tok::Not | Tok::LParen => true,
            Tok::Ident(s) => s != "U",
            _ => false,
        }
    }

    fn unary(&mut self) -> Result<Ltl, LtlError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(Ltl::Not(Box::new(self.unary()?)))
            }
            Tok::Ident(name) => {
                let op = matches!(name.as_str(), "X" | "F" | "G")
                    && Self::starts_operand(self.peek_at(1));
                self.bump();
                if !op {
                    return Ok(Ltl::Ap(name));
                }
                let inner = Box::new(self.unary()?);
                Ok(match name.as_str() {
                    "X" => Ltl::Next(inner),
                    "F" => Ltl::Eventually(inner),
                    _ => Ltl::Always(inner),
                })
            }
            Tok::LParen => {
                self.bump();
                self.open.push(pos);
                let inner = self.implies()?;
                if *self.peek() != Tok::RParen {
                    if *self.peek() == Tok::End {
                        return Err(LtlError::Unbalanced {
                            pos: self.open.pop().unwrap_or(pos),
                        });
                    }
                    return Err(LtlError::Trailing {
                        pos: self.pos(),
                        found: self.peek().describe(),
                    });
                }
                self.bump();
                self.open.pop();
                Ok(inner)
            }
            Tok::RParen if self.open.is_empty() => Err(LtlError::Unbalanced { pos }),
            other => Err(LtlError::MissingOperand {
                pos,
                found: other.describe(),
            }),
        }
    }
}

pub fn parse_ltl(text: &str) -> Result<Ltl, LtlError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        open: Vec::new(),
    };
    let f = p.implies()?;
    match p.peek() {
        Tok::End => Ok(f),
        Tok::RParen => Err(LtlError::Unbalanced { pos: p.pos() }),
        other => Err(LtlError::Trailing {
            pos: p.pos(),
            found: other.describe(),
        }),
    }
}

impl Ltl {
    pub fn ap(name: &str) -> Ltl {
        Ltl::Ap(name.to_string())
    }

    /// Proposition names in order of first occurrence.
    pub fn props(&self) -> Vec<String> {
        fn walk(f: &Ltl, out: &mut Vec<String>) {
            match f {
                Ltl::Ap(p) => {
                    if !out.contains(p) {
                        out.push(p.clone());
                    }
                }
                Ltl::Not(a) | Ltl::Next(a) | Ltl::Eventually(a) | Ltl::Always(a) => walk(a, out),
                Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Implies(a, b) | Ltl::Until(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// `(avoid, goal)` if the formula has the shape `!avoid U goal`.
    pub fn as_reach_avoid(&self) -> Option<(&str, &str)> {
        match self {
            Ltl::Until(lhs, rhs) => match (lhs.as_ref(), rhs.as_ref()) {
                (Ltl::Not(b), Ltl::Ap(g)) => match b.as_ref() {
                    Ltl::Ap(b) => Some((b.as_str(), g.as_str())),
                    _ => None,
                },
                _ => None,
            },
            _ => None,
        }
    }
}

impl fmt::Display for Ltl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // operator keywords used as names are wrapped so they re-parse as names
            Ltl::Ap(p) if matches!(p.as_str(), "X" | "F" | "G" | "U") => write!(f, "({p})"),
            Ltl::Ap(p) => write!(f, "{p}"),
            Ltl::Not(a) => write!(f, "!{a}"),
            Ltl::Next(a) => write!(f, "X {a}"),
            Ltl::Eventually(a) => write!(f, "F {a}"),
            Ltl::Always(a) => write!(f, "G {a}"),
            Ltl::And(a, b) => write!(f, "({a} & {b})"),
            Ltl::Or(a, b) => write!(f, "({a} | {b})"),
            Ltl::Implies(a, b) => write!(f, "({a} -> {b})"),
            Ltl::Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}
