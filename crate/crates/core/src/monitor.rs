//! Discrete-time evaluation of requirement formulas over a transcript.
//!
//! `S(f, W)` evaluates `f` over window `W`: an atom is one oracle query over
//! the channel projection of `W`, and temporal operators narrow the window.
//! Under `Always`, each turn `t` of the narrowed window is checked with the
//! pointwise form `H(f, t, W)`: an atom holds at `t` iff `t` is among the
//! evidence of its whole-window query, and a nested `Eventually` looks
//! forward from `t`.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::oracle::{Oracle, OracleError, OracleQuery, QueryTarget};
use crate::signal::{SignalError, Transcript, Window};
use crate::speclang::{
    resolve_within, AnswerRef, Form, Formula, PredicateAtom, Requirement, Resolved, TauBindings,
    UnboundTau,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error(transparent)]
    UnboundTau(#[from] UnboundTau),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// An oracle response whose confidence fell below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowConfidence {
    pub atom: String,
    pub window: Window,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Verdict {
    pub value: bool,
    /// Supporting turn indices, sorted; empty when `value` is false.
    pub evidence: Vec<usize>,
    /// Backend invocations incurred by this evaluation.
    pub oracle_calls: usize,
    pub low_confidence_atoms: Vec<LowConfidence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequirementEval {
    pub holds: bool,
    pub verdict: Verdict,
}

#[derive(Clone)]
enum Memo {
    Judged { verdict: bool, evidence: Vec<usize> },
    Answered(String),
}

struct Eval<'a> {
    transcript: &'a Transcript,
    taus: &'a TauBindings,
    oracle: &'a Oracle,
    memo: HashMap<(QueryTarget, Window), Memo>,
    calls: usize,
    low: Vec<LowConfidence>,
}

/// Truth value plus supporting turns.
type Out = (bool, BTreeSet<usize>);

fn yes(evidence: BTreeSet<usize>) -> Out {
    (true, evidence)
}

fn no() -> Out {
    (false, BTreeSet::new())
}

impl<'a> Eval<'a> {
    fn note_low(&mut self, target: &QueryTarget, window: Window, confidence: f64) {
        self.low.push(LowConfidence {
            atom: target.to_string(),
            window,
            confidence,
        });
    }

    fn judge(&mut self, atom: &PredicateAtom, w: Window) -> Result<(bool, Vec<usize>), MonitorError> {
        let target = QueryTarget::Atom(atom.clone());
        let key = (target, w);
        if let Some(Memo::Judged { verdict, evidence }) = self.memo.get(&key) {
            return Ok((*verdict, evidence.clone()));
        }
        let text = self.transcript.excerpt(atom.channel, w)?.render();
        let query = OracleQuery::atom(atom.clone(), text, w, self.transcript.call_id());
        let served = self.oracle.evaluate(&query)?;
        self.calls += usize::from(served.backend_call);
        let r = served.value;
        if r.low_confidence {
            self.note_low(&key.0, w, r.confidence);
        }
        self.memo.insert(
            key,
            Memo::Judged {
                verdict: r.verdict,
                evidence: r.evidence.clone(),
            },
        );
        Ok((r.verdict, r.evidence))
    }

    fn answer(&mut self, answer: &AnswerRef, w: Window) -> Result<String, MonitorError> {
        let key = (QueryTarget::Answer(answer.clone()), w);
        if let Some(Memo::Answered(a)) = self.memo.get(&key) {
            return Ok(a.clone());
        }
        let text = self.transcript.excerpt(answer.channel, w)?.render();
        let query = OracleQuery::answer(answer.clone(), text, w, self.transcript.call_id());
        let served = self.oracle.answer(&query)?;
        self.calls += usize::from(served.backend_call);
        if served.value.low_confidence {
            self.note_low(&key.0, w, served.value.confidence);
        }
        self.memo.insert(key, Memo::Answered(served.value.answer.clone()));
        Ok(served.value.answer)
    }

    fn addr_valid(&mut self, refs: &[AnswerRef], w: Window) -> Result<bool, MonitorError> {
        let answers = refs
            .iter()
            .map(|r| self.answer(r, w))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.oracle.verify_address(&answers)?.value)
    }

    fn narrow(&self, interval: &crate::speclang::Interval, w: Window) -> Result<Option<Window>, MonitorError> {
        Ok(match resolve_within(interval, w, self.taus)? {
            Resolved::Window(n) => Some(n),
            Resolved::Empty => None,
        })
    }

    /// Window mode.
    fn window(&mut self, f: &Formula, w: Window) -> Result<Out, MonitorError> {
        Ok(match f {
            Formula::Atom(atom) => {
                let (v, ev) = self.judge(atom, w)?;
                if v {
                    yes(ev.into_iter().collect())
                } else {
                    no()
                }
            }
            Formula::AddrValid(refs) => (self.addr_valid(refs, w)?, BTreeSet::new()),
            Formula::Not(g) => (!self.window(g, w)?.0, BTreeSet::new()),
            Formula::And(a, b) => {
                let (va, ea) = self.window(a, w)?;
                if !va {
                    return Ok(no());
                }
                let (vb, eb) = self.window(b, w)?;
                if !vb {
                    return Ok(no());
                }
                yes(ea.union(&eb).copied().collect())
            }
            Formula::Or(a, b) => {
                let ra = self.window(a, w)?;
                if ra.0 {
                    return Ok(ra);
                }
                self.window(b, w)?
            }
            Formula::Implies(a, b) => {
                if !self.window(a, w)?.0 {
                    return Ok(yes(BTreeSet::new()));
                }
                self.window(b, w)?
            }
            Formula::Eventually(i, g) => match self.narrow(i, w)? {
                Some(n) => self.window(g, n)?,
                None => no(),
            },
            Formula::Always(i, g) => match self.narrow(i, w)? {
                Some(n) => {
                    let mut evidence = BTreeSet::new();
                    for t in n.lo..=n.hi {
                        let (v, ev) = self.point(g, t, n)?;
                        if !v {
                            return Ok(no());
                        }
                        evidence.extend(ev);
                    }
                    yes(evidence)
                }
                None => yes(BTreeSet::new()),
            },
        })
    }

    /// Pointwise mode at turn `t` of window `w`.
    fn point(&mut self, f: &Formula, t: usize, w: Window) -> Result<Out, MonitorError> {
        Ok(match f {
            Formula::Atom(atom) => {
                let (_, ev) = self.judge(atom, w)?;
                if ev.binary_search(&t).is_ok() {
                    yes(BTreeSet::from([t]))
                } else {
                    no()
                }
            }
            Formula::AddrValid(_) => self.window(f, w)?,
            Formula::Not(g) => (!self.point(g, t, w)?.0, BTreeSet::new()),
            Formula::And(a, b) => {
                let (va, ea) = self.point(a, t, w)?;
                if !va {
                    return Ok(no());
                }
                let (vb, eb) = self.point(b, t, w)?;
                if !vb {
                    return Ok(no());
                }
                yes(ea.union(&eb).copied().collect())
            }
            Formula::Or(a, b) => {
                let ra = self.point(a, t, w)?;
                if ra.0 {
                    return Ok(ra);
                }
                self.point(b, t, w)?
            }
            Formula::Implies(a, b) => {
                if !self.point(a, t, w)?.0 {
                    return Ok(yes(BTreeSet::new()));
                }
                self.point(b, t, w)?
            }
            Formula::Eventually(..) | Formula::Always(..) => self.window(f, Window::new(t, w.hi))?,
        })
    }
}

fn check_taus(formula: &Formula, taus: &TauBindings) -> Result<(), UnboundTau> {
    match formula.tau_names().into_iter().find(|t| !taus.contains_key(t)) {
        Some(missing) => Err(UnboundTau(missing)),
        None => Ok(()),
    }
}

/// Evaluates `formula` over the whole transcript.
pub fn eval(
    formula: &Formula,
    transcript: &Transcript,
    taus: &TauBindings,
    oracle: &Oracle,
) -> Result<Verdict, MonitorError> {
    eval_within(formula, transcript, transcript.full_window(), taus, oracle)
}

/// Evaluates `formula` over `window`.
pub fn eval_within(
    formula: &Formula,
    transcript: &Transcript,
    window: Window,
    taus: &TauBindings,
    oracle: &Oracle,
) -> Result<Verdict, MonitorError> {
    check_taus(formula, taus)?;
    let mut ev = Eval {
        transcript,
        taus,
        oracle,
        memo: HashMap::new(),
        calls: 0,
        low: Vec::new(),
    };
    let (value, evidence) = ev.window(formula, window)?;
    Ok(Verdict {
        value,
        evidence: if value { evidence.into_iter().collect() } else { Vec::new() },
        oracle_calls: ev.calls,
        low_confidence_atoms: ev.low,
    })
}

/// Evaluates a requirement with its τ overrides laid over `defaults`.
pub fn eval_requirement(
    requirement: &Requirement,
    transcript: &Transcript,
    defaults: &TauBindings,
    oracle: &Oracle,
) -> Result<RequirementEval, MonitorError> {
    let taus = Form::taus_for(defaults, requirement);
    let verdict = eval(&requirement.formula, transcript, &taus, oracle)?;
    Ok(RequirementEval {
        holds: verdict.value,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{Gazetteer, Lexicon, RuleBackend};
    use crate::signal::{load_transcript, TranscriptFormat};
    use crate::speclang::parse_formula;
    use std::sync::Arc;

    fn oracle(lexicon: &str) -> Oracle {
        Oracle::new(
            Arc::new(RuleBackend::new(Lexicon::parse(lexicon).unwrap())),
            Arc::new(Gazetteer::parse("123 Main Street\t123 Main St\n").unwrap()),
        )
    }

    fn transcript(lines: &[&str]) -> Transcript {
        load_transcript(lines.join("\n").as_bytes(), TranscriptFormat::PlainDialogue).unwrap()
    }

    fn taus(pairs: &[(&str, u32)]) -> TauBindings {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    const LEX: &str = "ask address: what is the address\n\
        provide address: i'm at\n\
        double checks address: double check the address\n\
        trigger: ping\n\
        response: pong\n";

    #[test]
    fn early_address_ask() {
        let t = transcript(&[
            "B: help",
            "A: what is the address?",
            "B: I'm at 123 Main Street",
            "A: ok",
            "B: ok",
            "A: ok",
            "B: ok",
            "A: ok",
            "B: ok",
            "A: ok",
        ]);
        let f = parse_formula(r#"EVENTUALLY [0, tau1] DETECT(A, "ask address")"#).unwrap();
        let v = eval(&f, &t, &taus(&[("tau1", 6)]), &oracle(LEX)).unwrap();
        assert!(v.value);
        assert_eq!(v.evidence, vec![2]);
    }

    #[test]
    fn end_anchored_reverification() {
        let mut lines = vec!["A: ok"; 10];
        lines[0] = "A: what is the address?";
        lines[1] = "B: I'm at 123 Main Street";
        lines[8] = "A: let me double check the address, 123 Main St";
        let t = transcript(&lines);
        let f = parse_formula(
            r#"EVENTUALLY [T-tau2, T] (DETECT(A, "double checks address") AND ADDR_VALID(ANSWER(A, "what's address?")))"#,
        )
        .unwrap();
        let o = oracle(LEX);
        assert!(eval(&f, &t, &taus(&[("tau2", 4)]), &o).unwrap().value);
        assert!(!eval(&f, &t, &taus(&[("tau2", 0)]), &o).unwrap().value);
    }

    #[test]
    fn always_implies_checks_every_trigger() {
        // Triggers at 3 and 7, one response at 5, τ = 2.
        let mut lines = vec!["A: idle"; 10];
        lines[2] = "A: ping";
        lines[4] = "A: pong";
        lines[6] = "A: ping";
        let t = transcript(&lines);
        let f = parse_formula(
            r#"ALWAYS [0, T] (DETECT(A, "trigger") IMPLIES EVENTUALLY [0, tau] DETECT(A, "response"))"#,
        )
        .unwrap();
        let o = oracle(LEX);
        assert!(!eval(&f, &t, &taus(&[("tau", 2)]), &o).unwrap().value);
        lines[8] = "A: pong";
        let t = transcript(&lines);
        let v = eval(&f, &t, &taus(&[("tau", 2)]), &o).unwrap();
        assert!(v.value);
        assert_eq!(v.evidence, vec![5, 9]);
    }

    #[test]
    fn empty_windows() {
        let t = transcript(&["A: ping"; 10]);
        let o = oracle(LEX);
        let ev = parse_formula(r#"EVENTUALLY [8, 3] DETECT(A, "trigger")"#).unwrap();
        let al = parse_formula(r#"ALWAYS [8, 3] DETECT(A, "response")"#).unwrap();
        assert!(!eval(&ev, &t, &TauBindings::new(), &o).unwrap().value);
        assert!(eval(&al, &t, &TauBindings::new(), &o).unwrap().value);
    }

    #[test]
    fn unbound_tau_is_reported_before_evaluation() {
        let t = transcript(&["A: ping"]);
        let f = parse_formula(r#"DETECT(A, "nothing") AND EVENTUALLY [0, tau9] DETECT(A, "trigger")"#).unwrap();
        assert_eq!(
            eval(&f, &t, &TauBindings::new(), &oracle(LEX)),
            Err(MonitorError::UnboundTau(UnboundTau("tau9".into())))
        );
    }

    #[test]
    fn short_circuit_saves_calls() {
        let t = transcript(&["A: idle", "B: idle"]);
        let o = oracle(LEX);
        let f = parse_formula(r#"DETECT(A, "trigger") AND DETECT(A, "response")"#).unwrap();
        assert_eq!(eval(&f, &t, &TauBindings::new(), &o).unwrap().oracle_calls, 1);
    }

    #[test]
    fn channels_do_not_leak() {
        let t = transcript(&["B: ping"]);
        let f = parse_formula(r#"DETECT(A, "trigger")"#).unwrap();
        assert!(!eval(&f, &t, &TauBindings::new(), &oracle(LEX)).unwrap().value);
    }
}
