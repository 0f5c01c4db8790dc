//! The debrief: context inference, form finalization, precondition gating,
//! runtime checking and aggregation into a filled QA form.

mod aggregate;
mod context;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

pub use aggregate::{
    aggregate_address, aggregate_check, aggregate_conditional, aggregate_identity, generate_feedback,
    Outcome, RoleMissing,
};
pub use context::{classify_types, detect_responders, finalize_form, flag_criticals, ContextResult};
pub use report::{Escalation, QAFormResult, Stats};

use crate::monitor::{eval, eval_requirement, LowConfidence, MonitorError, Verdict};
use crate::oracle::{Oracle, OracleError};
use crate::signal::{SignalError, Transcript};
use crate::speclang::{CheckKind, Form, FormCheck, Formula, Requirement, RequirementLibrary, Role, TauBindings, UnboundTau};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("no responder detected in the transcript")]
    EmptyContext,
    #[error("library: {0}")]
    Library(String),
    #[error(transparent)]
    UnboundTau(#[from] UnboundTau),
    #[error(transparent)]
    RoleMissing(#[from] RoleMissing),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

impl From<MonitorError> for PipelineError {
    fn from(e: MonitorError) -> Self {
        match e {
            MonitorError::UnboundTau(u) => Self::UnboundTau(u),
            MonitorError::Oracle(o) => Self::Oracle(o),
            MonitorError::Signal(s) => Self::Signal(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Status {
    Holds,
    Fails,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequirementVerdict {
    #[serde(rename = "id")]
    pub requirement: String,
    #[serde(skip)]
    pub description: String,
    /// Role within a role-bound check.
    #[serde(skip)]
    pub role: Option<Role>,
    pub status: Status,
    pub evidence: Vec<usize>,
    pub low_confidence: bool,
    #[serde(skip)]
    pub oracle_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: String,
    #[serde(skip)]
    pub name: String,
    pub kind: CheckKind,
    pub outcome: Outcome,
    pub rationale: String,
    /// Some verdict of this check rests on a low-confidence oracle response.
    pub escalate: bool,
    pub requirements: Vec<RequirementVerdict>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DebriefConfig {
    /// Laid over the library's τ defaults.
    pub tau_overrides: TauBindings,
}

/// Oracle cost and low-confidence responses accumulated over one debrief.
#[derive(Debug, Default)]
pub struct Tally {
    pub oracle_calls: usize,
    pub escalations: Vec<Escalation>,
}

impl Tally {
    fn absorb(&mut self, v: &Verdict, check: Option<&str>, requirement: Option<&str>) {
        self.oracle_calls += v.oracle_calls;
        self.escalations.extend(v.low_confidence_atoms.iter().map(|l| Escalation::new(l, check, requirement)));
    }
}

struct ScanResult {
    holds: bool,
    low: Vec<LowConfidence>,
}

/// A requirement's precondition outcome: whether it is monitored, and
/// whether any SCAN answer behind that decision was low-confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gate {
    pub retained: bool,
    pub low_confidence: bool,
}

/// Decides every requirement of `form`. Applicability is settled from the
/// context alone; SCAN preconditions are all asked, each at most once.
pub fn gate_preconditions(
    form: &Form,
    context: &ContextResult,
    transcript: &Transcript,
    oracle: &Oracle,
    tally: &mut Tally,
) -> Result<BTreeMap<String, Gate>, PipelineError> {
    let mut scans: BTreeMap<String, ScanResult> = BTreeMap::new();
    let mut gates = BTreeMap::new();
    for check in &form.checks {
        for r in &check.requirements {
            if gates.contains_key(&r.id) {
                continue;
            }
            if let Some(app) = &r.applicability {
                if !app.admits(&context.call_types, &context.criticals) {
                    gates.insert(r.id.clone(), Gate { retained: false, low_confidence: false });
                    continue;
                }
            }
            let mut retained = true;
            let mut low = false;
            for p in &r.preconditions {
                let key = p.to_string();
                if !scans.contains_key(&key) {
                    let v = eval(&Formula::Atom(p.clone()), transcript, &TauBindings::new(), oracle)?;
                    tally.absorb(&v, Some(&check.id), Some(&r.id));
                    scans.insert(key.clone(), ScanResult { holds: v.value, low: v.low_confidence_atoms });
                }
                let s = &scans[&key];
                retained &= s.holds;
                low |= !s.low.is_empty();
            }
            gates.insert(r.id.clone(), Gate { retained, low_confidence: low });
        }
    }
    Ok(gates)
}

fn check_one(
    check: &FormCheck,
    gates: &BTreeMap<String, Gate>,
    transcript: &Transcript,
    taus: &TauBindings,
    oracle: &Oracle,
    tally: &mut Tally,
) -> Result<Vec<RequirementVerdict>, PipelineError> {
    let role_of = |r: &Requirement| check.roles.iter().find(|(_, id)| **id == r.id).map(|(role, _)| *role);
    let mut out = Vec::with_capacity(check.requirements.len());
    for r in &check.requirements {
        let gate = gates.get(&r.id).copied().unwrap_or(Gate { retained: true, low_confidence: false });
        let base = RequirementVerdict {
            requirement: r.id.clone(),
            description: r.description.clone(),
            role: role_of(r),
            status: Status::Skipped,
            evidence: Vec::new(),
            low_confidence: gate.low_confidence,
            oracle_calls: 0,
        };
        if !gate.retained {
            out.push(base);
            continue;
        }
        let e = eval_requirement(r, transcript, taus, oracle)?;
        tally.absorb(&e.verdict, Some(&check.id), Some(&r.id));
        out.push(RequirementVerdict {
            status: if e.holds { Status::Holds } else { Status::Fails },
            evidence: e.verdict.evidence,
            low_confidence: base.low_confidence || !e.verdict.low_confidence_atoms.is_empty(),
            oracle_calls: e.verdict.oracle_calls,
            ..base
        });
    }
    Ok(out)
}

/// Monitors every retained requirement of `form`, check by check. Stops at
/// the first oracle failure, returning the checks completed so far.
pub fn check_requirements(
    form: &Form,
    gates: &BTreeMap<String, Gate>,
    transcript: &Transcript,
    taus: &TauBindings,
    oracle: &Oracle,
    tally: &mut Tally,
) -> (Vec<(usize, Vec<RequirementVerdict>)>, Option<PipelineError>) {
    let mut done = Vec::new();
    for (i, check) in form.checks.iter().enumerate() {
        match check_one(check, gates, transcript, taus, oracle, tally) {
            Ok(v) => done.push((i, v)),
            Err(e) => return (done, Some(e)),
        }
    }
    (done, None)
}

fn fill(check: &FormCheck, verdicts: Vec<RequirementVerdict>) -> Result<CheckOutcome, RoleMissing> {
    let outcome = aggregate_check(check, &verdicts)?;
    Ok(CheckOutcome {
        id: check.id.clone(),
        name: check.name.clone(),
        kind: check.kind,
        outcome,
        rationale: generate_feedback(outcome, &verdicts),
        escalate: verdicts.iter().any(|v| v.low_confidence),
        requirements: verdicts,
    })
}

fn requirement_ids(form: &Form) -> Vec<String> {
    let mut seen = BTreeSet::new();
    form.checks
        .iter()
        .flat_map(|c| c.requirements.iter())
        .filter(|r| seen.insert(r.id.clone()))
        .map(|r| r.id.clone())
        .collect()
}

/// Infers the call context and the finalized form it selects.
pub fn infer_context(
    transcript: &Transcript,
    library: &RequirementLibrary,
    oracle: &Oracle,
    tally: &mut Tally,
) -> Result<ContextResult, PipelineError> {
    let responders = detect_responders(transcript, oracle, tally)?;
    let call_types = classify_types(transcript, &responders, library, oracle, tally)?;
    let criticals = flag_criticals(transcript, library, oracle, tally)?;
    Ok(ContextResult {
        responders,
        call_types,
        criticals,
    })
}

/// Runs the whole debrief of one call. An oracle failure yields a result
/// marked partial, listing the requirements it could not evaluate.
pub fn debrief(
    transcript: &Transcript,
    library: &RequirementLibrary,
    oracle: &Oracle,
    config: &DebriefConfig,
) -> Result<QAFormResult, PipelineError> {
    let started = Instant::now();
    let mut tally = Tally::default();
    let mut taus = library.tau_defaults.clone();
    taus.extend(config.tau_overrides.iter().map(|(k, v)| (k.clone(), *v)));

    let partial = |context: ContextResult, checks: Vec<CheckOutcome>, unevaluated: Vec<String>, err: OracleError, tally: Tally| {
        QAFormResult::new(transcript.call_id(), context, checks, tally, started, unevaluated, Some(err.to_string()))
    };

    let context = match infer_context(transcript, library, oracle, &mut tally) {
        Ok(c) => c,
        Err(PipelineError::Oracle(e)) => return Ok(partial(ContextResult::default(), Vec::new(), Vec::new(), e, tally)),
        Err(e) => return Err(e),
    };
    let form = finalize_form(&context, library)?;
    for check in &form.checks {
        for r in &check.requirements {
            for name in r.formula.tau_names() {
                if !Form::taus_for(&taus, r).contains_key(&name) {
                    return Err(UnboundTau(name).into());
                }
            }
        }
    }

    let gates = match gate_preconditions(&form, &context, transcript, oracle, &mut tally) {
        Ok(g) => g,
        Err(PipelineError::Oracle(e)) => {
            let pending = requirement_ids(&form);
            return Ok(partial(context, Vec::new(), pending, e, tally));
        }
        Err(e) => return Err(e),
    };

    let (done, failure) = check_requirements(&form, &gates, transcript, &taus, oracle, &mut tally);
    let mut checks = Vec::with_capacity(done.len());
    for (i, verdicts) in done {
        checks.push(fill(&form.checks[i], verdicts)?);
    }
    match failure {
        None => Ok(QAFormResult::new(transcript.call_id(), context, checks, tally, started, Vec::new(), None)),
        Some(PipelineError::Oracle(e)) => {
            let finished: BTreeSet<&str> = checks
                .iter()
                .flat_map(|c| c.requirements.iter().map(|r| r.requirement.as_str()))
                .collect();
            let pending = requirement_ids(&form)
                .into_iter()
                .filter(|id| !finished.contains(id.as_str()))
                .collect();
            Ok(partial(context, checks, pending, e, tally))
        }
        Some(e) => Err(e),
    }
}
