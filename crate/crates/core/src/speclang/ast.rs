use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::signal::Channel;

/// Turn offset used by interval bounds: a literal or a named τ parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Offset {
    Turns(u32),
    Tau(String),
}

impl fmt::Display for Offset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Offset::Turns(n) => write!(f, "{n}"),
            Offset::Tau(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bound {
    /// `k` turns after the first turn of the enclosing window.
    FromStart(Offset),
    /// `k` turns before the last turn of the enclosing window.
    FromEnd(Offset),
}

impl Bound {
    pub fn offset(&self) -> &Offset {
        match self {
            Bound::FromStart(o) | Bound::FromEnd(o) => o,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::FromStart(o) => write!(f, "{o}"),
            Bound::FromEnd(Offset::Turns(0)) => f.write_str("T"),
            Bound::FromEnd(o) => write!(f, "T-{o}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Bound,
    pub hi: Bound,
}

impl Interval {
    pub fn new(lo: Bound, hi: Bound) -> Self {
        Self { lo, hi }
    }

    /// `[0, T]`: the whole enclosing window.
    pub fn whole() -> Self {
        Self::new(
            Bound::FromStart(Offset::Turns(0)),
            Bound::FromEnd(Offset::Turns(0)),
        )
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomKind {
    Scene,
    Type,
    Critical,
    Scan,
    Detect,
}

impl AtomKind {
    pub fn keyword(self) -> &'static str {
        match self {
            AtomKind::Scene => "SCENE",
            AtomKind::Type => "TYPE",
            AtomKind::Critical => "CRITICAL",
            AtomKind::Scan => "SCAN",
            AtomKind::Detect => "DETECT",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "SCENE" => Some(AtomKind::Scene),
            "TYPE" => Some(AtomKind::Type),
            "CRITICAL" => Some(AtomKind::Critical),
            "SCAN" => Some(AtomKind::Scan),
            "DETECT" => Some(AtomKind::Detect),
            _ => None,
        }
    }

    pub const ALL: [AtomKind; 5] = [
        AtomKind::Scene,
        AtomKind::Type,
        AtomKind::Critical,
        AtomKind::Scan,
        AtomKind::Detect,
    ];
}

/// A natural-language judgment over a channel of the transcript.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredicateAtom {
    pub kind: AtomKind,
    pub channel: Channel,
    pub query: String,
}

impl PredicateAtom {
    pub fn new(kind: AtomKind, channel: Channel, query: impl Into<String>) -> Self {
        Self {
            kind,
            channel,
            query: query.into(),
        }
    }
}

impl fmt::Display for PredicateAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}, {})",
            self.kind.keyword(),
            self.channel,
            quote(&self.query)
        )
    }
}

/// Extraction request whose result feeds the address verifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerRef {
    pub channel: Channel,
    pub question: String,
}

impl AnswerRef {
    pub fn new(channel: Channel, question: impl Into<String>) -> Self {
        Self {
            channel,
            question: question.into(),
        }
    }
}

impl fmt::Display for AnswerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ANSWER({}, {})", self.channel, quote(&self.question))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    Atom(PredicateAtom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
    /// One or two extracted answers checked by the address verifier.
    AddrValid(Vec<AnswerRef>),
}

impl Formula {
    pub fn atom(kind: AtomKind, channel: Channel, query: impl Into<String>) -> Self {
        Formula::Atom(PredicateAtom::new(kind, channel, query))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn eventually(i: Interval, f: Formula) -> Self {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn always(i: Interval, f: Formula) -> Self {
        Formula::Always(i, Box::new(f))
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) | Formula::AddrValid(_) => 1,
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => 1 + f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// Every τ name referenced by an interval bound.
    pub fn tau_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_taus(&mut out);
        out
    }

    fn collect_taus(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(_) | Formula::AddrValid(_) => {}
            Formula::Not(f) => f.collect_taus(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_taus(out);
                b.collect_taus(out);
            }
            Formula::Eventually(i, f) | Formula::Always(i, f) => {
                for b in [&i.lo, &i.hi] {
                    if let Offset::Tau(name) = b.offset() {
                        out.insert(name.clone());
                    }
                }
                f.collect_taus(out);
            }
        }
    }

    pub fn atoms(&self) -> Vec<&PredicateAtom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a PredicateAtom>) {
        match self {
            Formula::Atom(a) => out.push(a),
            Formula::AddrValid(_) => {}
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => {
                f.collect_atoms(out)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(_) | Formula::Eventually(..) | Formula::Always(..) => 4,
            Formula::Atom(_) | Formula::AddrValid(_) => 5,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        match self {
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::AddrValid(refs) => {
                f.write_str("ADDR_VALID(")?;
                for (n, r) in refs.iter().enumerate() {
                    if n > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{r}")?;
                }
                f.write_str(")")
            }
            Formula::Not(inner) => {
                f.write_str("NOT ")?;
                inner.fmt_child(f, inner.precedence() < 4)
            }
            Formula::Eventually(i, inner) => {
                write!(f, "EVENTUALLY {i} ")?;
                inner.fmt_child(f, inner.precedence() < 4)
            }
            Formula::Always(i, inner) => {
                write!(f, "ALWAYS {i} ")?;
                inner.fmt_child(f, inner.precedence() < 4)
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                let op = if matches!(self, Formula::And(..)) { "AND" } else { "OR" };
                a.fmt_child(f, a.precedence() < p)?;
                write!(f, " {op} ")?;
                b.fmt_child(f, b.precedence() <= p)
            }
            Formula::Implies(a, b) => {
                a.fmt_child(f, a.precedence() <= p)?;
                f.write_str(" IMPLIES ")?;
                b.fmt_child(f, b.precedence() < p)
            }
        }
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}
