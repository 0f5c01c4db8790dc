use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EmulationError;
use crate::speclang::Responder;

/// Caller identity details a scenario may let the caller withhold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityField {
    Address,
    Name,
    Phone,
}

impl IdentityField {
    pub const ALL: [IdentityField; 3] = [IdentityField::Address, IdentityField::Name, IdentityField::Phone];
}

impl fmt::Display for IdentityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdentityField::Address => "address",
            IdentityField::Name => "name",
            IdentityField::Phone => "phone",
        })
    }
}

/// One scripted exchange performing a required call-taker action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub requirement: String,
    pub call_taker: String,
    pub caller: String,
}

fn all_fields() -> BTreeSet<IdentityField> {
    IdentityField::ALL.into_iter().collect()
}

fn default_refusal_rate() -> f64 {
    0.2
}

/// A scripted incident. The context fields and `facts` are what the
/// transcript is built to show; `steps` perform its conditional actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub call_type: String,
    pub responders: BTreeSet<Responder>,
    pub call_types: BTreeSet<String>,
    pub criticals: BTreeSet<String>,
    /// Precondition queries that hold in this incident.
    pub facts: BTreeSet<String>,
    /// The caller's first utterance; carries every context cue.
    pub opening: String,
    pub steps: Vec<ScriptStep>,
    #[serde(default = "all_fields")]
    pub refusable: BTreeSet<IdentityField>,
    /// Per-field probability that a refusable field is withheld.
    #[serde(default = "default_refusal_rate")]
    pub refusal_rate: f64,
}

pub fn parse_scenarios(source: &str) -> Result<Vec<Scenario>, EmulationError> {
    let scenarios: Vec<Scenario> =
        serde_json::from_str(source).map_err(|e| EmulationError::Scenario(e.to_string()))?;
    let mut names = BTreeSet::new();
    for s in &scenarios {
        if !names.insert(s.name.as_str()) {
            return Err(EmulationError::Scenario(format!("scenario `{}` defined twice", s.name)));
        }
        if s.responders.is_empty() {
            return Err(EmulationError::Scenario(format!("scenario `{}` has no responders", s.name)));
        }
        if !(0.0..=1.0).contains(&s.refusal_rate) {
            return Err(EmulationError::Scenario(format!("scenario `{}` refusal rate out of [0,1]", s.name)));
        }
        let mut seen = BTreeSet::new();
        for step in &s.steps {
            if !seen.insert(step.requirement.as_str()) {
                return Err(EmulationError::Scenario(format!(
                    "scenario `{}` scripts `{}` twice",
                    s.name, step.requirement
                )));
            }
            if step.call_taker.trim().is_empty() || step.caller.trim().is_empty() {
                return Err(EmulationError::Scenario(format!(
                    "scenario `{}` has an empty utterance for `{}`",
                    s.name, step.requirement
                )));
            }
        }
    }
    Ok(scenarios)
}
