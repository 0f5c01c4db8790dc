//! Reference evaluator: one rule-backend judgment per turn, no memo, no cache,
//! both operands of every connective always evaluated.

use debrief_core::oracle::{extract_answer, AddressVerifier, Gazetteer, Lexicon, OracleQuery, PredicateBackend, RuleBackend};
use debrief_core::signal::{Transcript, Window};
use debrief_core::speclang::{Bound, Formula, Interval, Offset, PredicateAtom, TauBindings};

pub struct Brute<'a> {
    backend: RuleBackend,
    gazetteer: &'a Gazetteer,
    transcript: &'a Transcript,
    taus: &'a TauBindings,
}

impl<'a> Brute<'a> {
    pub fn new(lexicon: &Lexicon, gazetteer: &'a Gazetteer, transcript: &'a Transcript, taus: &'a TauBindings) -> Self {
        Self {
            backend: RuleBackend::new(lexicon.clone()),
            gazetteer,
            transcript,
            taus,
        }
    }

    pub fn eval(&self, f: &Formula) -> bool {
        self.over(f, 1, self.transcript.horizon() as i64)
    }

    fn line(&self, t: i64) -> String {
        let turn = &self.transcript.turns()[(t - 1) as usize];
        format!("[{}] {}: {}", turn.index, turn.speaker.tag(), turn.text)
    }

    /// The atom judged on turn `t` alone.
    pub fn at(&self, atom: &PredicateAtom, t: i64) -> bool {
        let turn = &self.transcript.turns()[(t - 1) as usize];
        if !atom.channel.admits(turn.speaker) {
            return false;
        }
        let q = OracleQuery::atom(atom.clone(), self.line(t), Window::new(t as usize, t as usize), "brute");
        self.backend.judge(&q).expect("rule backend never fails").verdict
    }

    fn offset(&self, o: &Offset) -> i64 {
        match o {
            Offset::Turns(n) => *n as i64,
            Offset::Tau(name) => self.taus[name] as i64,
        }
    }

    fn point(&self, b: &Bound, lo: i64, hi: i64) -> i64 {
        match b {
            Bound::FromStart(o) => std::cmp::min(lo + self.offset(o), hi),
            Bound::FromEnd(o) => std::cmp::max(hi - self.offset(o), lo),
        }
    }

    fn narrow(&self, i: &Interval, lo: i64, hi: i64) -> Option<(i64, i64)> {
        let (a, b) = (self.point(&i.lo, lo, hi), self.point(&i.hi, lo, hi));
        (a <= b).then_some((a, b))
    }

    fn addr_valid(&self, answers: &[debrief_core::speclang::AnswerRef], lo: i64, hi: i64) -> bool {
        let extracted: Vec<String> = answers
            .iter()
            .map(|a| {
                (lo..=hi)
                    .filter(|&t| a.channel.admits(self.transcript.turns()[(t - 1) as usize].speaker))
                    .find_map(|t| extract_answer(&self.line(t), &a.question))
                    .unwrap_or_default()
            })
            .collect();
        self.gazetteer.verify(&extracted).expect("at most two answers").value
    }

    /// Window semantics over `[lo, hi]`.
    pub fn over(&self, f: &Formula, lo: i64, hi: i64) -> bool {
        match f {
            Formula::Atom(a) => {
                let hits: Vec<bool> = (lo..=hi).map(|t| self.at(a, t)).collect();
                hits.into_iter().fold(false, |acc, h| acc | h)
            }
            Formula::AddrValid(answers) => self.addr_valid(answers, lo, hi),
            Formula::Not(g) => !self.over(g, lo, hi),
            Formula::And(a, b) => {
                let (x, y) = (self.over(a, lo, hi), self.over(b, lo, hi));
                x & y
            }
            Formula::Or(a, b) => {
                let (x, y) = (self.over(a, lo, hi), self.over(b, lo, hi));
                x | y
            }
            Formula::Implies(a, b) => {
                let (x, y) = (self.over(a, lo, hi), self.over(b, lo, hi));
                !x | y
            }
            Formula::Eventually(i, g) => match self.narrow(i, lo, hi) {
                Some((a, b)) => self.over(g, a, b),
                None => false,
            },
            Formula::Always(i, g) => match self.narrow(i, lo, hi) {
                Some((a, b)) => {
                    let each: Vec<bool> = (a..=b).map(|t| self.at_turn(g, t, a, b)).collect();
                    each.into_iter().fold(true, |acc, h| acc & h)
                }
                None => true,
            },
        }
    }

    /// Pointwise semantics at turn `t` of `[lo, hi]`.
    pub fn at_turn(&self, f: &Formula, t: i64, lo: i64, hi: i64) -> bool {
        match f {
            Formula::Atom(a) => self.at(a, t),
            Formula::AddrValid(_) => self.over(f, lo, hi),
            Formula::Not(g) => !self.at_turn(g, t, lo, hi),
            Formula::And(a, b) => {
                let (x, y) = (self.at_turn(a, t, lo, hi), self.at_turn(b, t, lo, hi));
                x & y
            }
            Formula::Or(a, b) => {
                let (x, y) = (self.at_turn(a, t, lo, hi), self.at_turn(b, t, lo, hi));
                x | y
            }
            Formula::Implies(a, b) => {
                let (x, y) = (self.at_turn(a, t, lo, hi), self.at_turn(b, t, lo, hi));
                !x | y
            }
            Formula::Eventually(..) | Formula::Always(..) => self.over(f, t, hi),
        }
    }
}
