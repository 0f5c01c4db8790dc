//! Recursive-descent parser for the formula DSL.
//!
//! ```text
//! implies := or ("IMPLIES" implies)?
//! or      := and ("OR" and)*
//! and     := unary ("AND" unary)*
//! unary   := "NOT" unary | ("EVENTUALLY" | "ALWAYS") interval unary | primary
//! primary := "(" implies ")" | kind "(" channel "," string ")"
//!          | "ADDR_VALID" "(" answer ("," answer)? ")"
//! ```

use std::fmt;

use thiserror::Error;

use super::ast::{AnswerRef, AtomKind, Bound, Formula, Interval, Offset, PredicateAtom};
use crate::signal::Channel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {line}:{column}: expected {}, found {found}", .expected.join(" | "))]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u32),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Minus,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    let err = |line, column, expected: &str, found: String| ParseError {
        line,
        column,
        expected: vec![expected.to_string()],
        found,
    };
    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, column);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        let tok = match c {
            '(' => {
                bump(&mut chars);
                Tok::LParen
            }
            ')' => {
                bump(&mut chars);
                Tok::RParen
            }
            '[' => {
                bump(&mut chars);
                Tok::LBracket
            }
            ']' => {
                bump(&mut chars);
                Tok::RBracket
            }
            ',' => {
                bump(&mut chars);
                Tok::Comma
            }
            '-' => {
                bump(&mut chars);
                Tok::Minus
            }
            '"' => {
                bump(&mut chars);
                let mut s = String::new();
                loop {
                    match bump(&mut chars) {
                        None => return Err(err(tl, tc, "closing `\"`", "end of input".into())),
                        Some('"') => break,
                        Some('\\') => match bump(&mut chars) {
                            Some('n') => s.push('\n'),
                            Some(e @ ('"' | '\\')) => s.push(e),
                            other => {
                                return Err(err(
                                    line,
                                    column,
                                    "escape sequence",
                                    format!("{other:?}"),
                                ))
                            }
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    s.push(d);
                    bump(&mut chars);
                }
                let n = s
                    .parse::<u32>()
                    .map_err(|_| err(tl, tc, "integer", s.clone()))?;
                Tok::Int(n)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if !(d.is_ascii_alphanumeric() || d == '_') {
                        break;
                    }
                    s.push(d);
                    bump(&mut chars);
                }
                Tok::Ident(s)
            }
            other => return Err(err(tl, tc, "token", format!("`{other}`"))),
        };
        out.push(Spanned {
            tok,
            line: tl,
            column: tc,
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "EVENTUALLY",
    "ALWAYS",
    "NOT",
    "AND",
    "OR",
    "IMPLIES",
    "ADDR_VALID",
    "ANSWER",
    "DETECT",
    "SCAN",
    "SCENE",
    "TYPE",
    "CRITICAL",
    "T",
];

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn advance(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let here = self.peek();
        Err(ParseError {
            line: here.line,
            column: here.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: here.tok.to_string(),
        })
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, tok: Tok, shown: &str) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.advance();
            Ok(())
        } else {
            self.fail(&[shown])
        }
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if self.is_keyword("IMPLIES") {
            self.advance();
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while self.is_keyword("OR") {
            self.advance();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while self.is_keyword("AND") {
            self.advance();
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.is_keyword("NOT") {
            self.advance();
            return Ok(Formula::not(self.unary()?));
        }
        if self.is_keyword("EVENTUALLY") {
            self.advance();
            let i = self.interval()?;
            return Ok(Formula::eventually(i, self.unary()?));
        }
        if self.is_keyword("ALWAYS") {
            self.advance();
            let i = self.interval()?;
            return Ok(Formula::always(i, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        const STARTS: &[&str] = &[
            "`(`",
            "NOT",
            "EVENTUALLY",
            "ALWAYS",
            "DETECT",
            "SCAN",
            "SCENE",
            "TYPE",
            "CRITICAL",
            "ADDR_VALID",
        ];
        match self.peek().tok.clone() {
            Tok::LParen => {
                self.advance();
                let f = self.implies()?;
                if self.peek().tok != Tok::RParen {
                    return self.fail(&["`)`", "AND", "OR", "IMPLIES"]);
                }
                self.advance();
                Ok(f)
            }
            Tok::Ident(word) if word == "ADDR_VALID" => {
                self.advance();
                self.expect(Tok::LParen, "`(`")?;
                let mut refs = vec![self.answer()?];
                if self.peek().tok == Tok::Comma {
                    self.advance();
                    refs.push(self.answer()?);
                }
                if self.peek().tok != Tok::RParen {
                    return self.fail(&["`)`", "`,`"]);
                }
                self.advance();
                Ok(Formula::AddrValid(refs))
            }
            Tok::Ident(word) => match AtomKind::from_keyword(&word) {
                Some(kind) => {
                    self.advance();
                    let (channel, query) = self.channel_and_string()?;
                    Ok(Formula::Atom(PredicateAtom {
                        kind,
                        channel,
                        query,
                    }))
                }
                None => self.fail(STARTS),
            },
            _ => self.fail(STARTS),
        }
    }

    fn answer(&mut self) -> Result<AnswerRef, ParseError> {
        if !self.is_keyword("ANSWER") {
            return self.fail(&["ANSWER"]);
        }
        self.advance();
        let (channel, question) = self.channel_and_string()?;
        Ok(AnswerRef { channel, question })
    }

    fn channel_and_string(&mut self) -> Result<(Channel, String), ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let channel = match &self.peek().tok {
            Tok::Ident(s) => match Channel::from_tag(s) {
                Some(c) => c,
                None => return self.fail(&["A", "B", "AB"]),
            },
            _ => return self.fail(&["A", "B", "AB"]),
        };
        self.advance();
        self.expect(Tok::Comma, "`,`")?;
        let text = match &self.peek().tok {
            Tok::Str(s) => s.clone(),
            _ => return self.fail(&["string"]),
        };
        self.advance();
        self.expect(Tok::RParen, "`)`")?;
        Ok((channel, text))
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.bound()?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.bound()?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok(Interval { lo, hi })
    }

    fn bound(&mut self) -> Result<Bound, ParseError> {
        const EXPECTED: &[&str] = &["integer", "T", "T-<offset>", "tau name"];
        match self.peek().tok.clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Bound::FromStart(Offset::Turns(n)))
            }
            Tok::Ident(s) if s == "T" => {
                self.advance();
                if self.peek().tok == Tok::Minus {
                    self.advance();
                    Ok(Bound::FromEnd(self.offset()?))
                } else {
                    Ok(Bound::FromEnd(Offset::Turns(0)))
                }
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(Bound::FromStart(Offset::Tau(s)))
            }
            _ => self.fail(EXPECTED),
        }
    }

    fn offset(&mut self) -> Result<Offset, ParseError> {
        match self.peek().tok.clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Offset::Turns(n))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(Offset::Tau(s))
            }
            _ => self.fail(&["integer", "tau name"]),
        }
    }
}

pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let f = p.implies()?;
    if p.peek().tok != Tok::Eof {
        return p.fail(&["AND", "OR", "IMPLIES", "end of input"]);
    }
    Ok(f)
}

/// Parses a single predicate atom such as `SCAN(AB, "caller reports an odor")`.
pub fn parse_atom(text: &str) -> Result<PredicateAtom, ParseError> {
    match parse_formula(text)? {
        Formula::Atom(a) => Ok(a),
        _ => Err(ParseError {
            line: 1,
            column: 1,
            expected: vec!["a single predicate atom".into()],
            found: "compound formula".into(),
        }),
    }
}

/// True if `name` can be used as a τ identifier in interval bounds.
pub fn is_valid_tau_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !KEYWORDS.contains(&name)
}
