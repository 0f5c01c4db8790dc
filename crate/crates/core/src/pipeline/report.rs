use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use super::{CheckOutcome, ContextResult, Outcome, Status, Tally};
use crate::monitor::LowConfidence;
use crate::signal::Window;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Escalation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requirement: Option<String>,
    pub atom: String,
    pub window: Window,
    pub confidence: f64,
}

impl Escalation {
    pub(super) fn new(l: &LowConfidence, check: Option<&str>, requirement: Option<&str>) -> Self {
        Self {
            check: check.map(str::to_string),
            requirement: requirement.map(str::to_string),
            atom: l.atom.clone(),
            window: l.window,
            confidence: l.confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub oracle_calls: usize,
    pub elapsed_ms: u64,
}

/// The filled QA form of one call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QAFormResult {
    pub call_id: String,
    pub context: ContextResult,
    pub checks: Vec<CheckOutcome>,
    pub escalations: Vec<Escalation>,
    pub stats: Stats,
    pub partial: bool,
    /// Requirements left unevaluated by an oracle failure.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unevaluated: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QAFormResult {
    pub(super) fn new(
        call_id: &str,
        context: ContextResult,
        checks: Vec<CheckOutcome>,
        tally: Tally,
        started: Instant,
        unevaluated: Vec<String>,
        error: Option<String>,
    ) -> Self {
        Self {
            call_id: call_id.to_string(),
            context,
            checks,
            escalations: tally.escalations,
            stats: Stats {
                oracle_calls: tally.oracle_calls,
                elapsed_ms: started.elapsed().as_millis() as u64,
            },
            partial: error.is_some(),
            unevaluated,
            error,
        }
    }

    pub fn check(&self, id: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn outcome(&self, id: &str) -> Option<Outcome> {
        self.check(id).map(|c| c.outcome)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |it: Vec<String>| if it.is_empty() { "-".to_string() } else { it.join(", ") };
        let _ = writeln!(s, "call {}", self.call_id);
        let _ = writeln!(
            s,
            "responders: {}",
            join(self.context.responders.iter().map(|r| r.to_string()).collect())
        );
        let _ = writeln!(s, "types: {}", join(self.context.call_types.iter().cloned().collect()));
        let _ = writeln!(s, "criticals: {}", join(self.context.criticals.iter().cloned().collect()));
        for c in &self.checks {
            let flag = if c.escalate { "  (review)" } else { "" };
            let _ = writeln!(s, "\n[{}] {} ({}){}", c.outcome, c.name, c.id, flag);
            let _ = writeln!(s, "  {}", c.rationale);
            for r in &c.requirements {
                let status = match r.status {
                    Status::Holds => "holds",
                    Status::Fails => "fails",
                    Status::Skipped => "skipped",
                };
                let turns = if r.evidence.is_empty() {
                    String::new()
                } else {
                    format!(" at turn {}", r.evidence.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
                };
                let _ = writeln!(s, "  - {} {}{}", r.requirement, status, turns);
            }
        }
        if !self.escalations.is_empty() {
            let _ = writeln!(s, "\nlow-confidence answers:");
            for e in &self.escalations {
                let _ = writeln!(s, "  {} over {} ({:.2})", e.atom, e.window, e.confidence);
            }
        }
        if self.partial {
            let _ = writeln!(s, "\nPARTIAL: {}", self.error.as_deref().unwrap_or("oracle failure"));
            if !self.unevaluated.is_empty() {
                let _ = writeln!(s, "unevaluated: {}", self.unevaluated.join(", "));
            }
        }
        let _ = writeln!(s, "\noracle calls: {}, {} ms", self.stats.oracle_calls, self.stats.elapsed_ms);
        s
    }
}
