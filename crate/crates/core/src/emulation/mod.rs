//! Scripted calls at controlled proficiency, their ground-truth forms, and
//! the F1 harness scoring debriefs against them.

mod benchmark;
mod generate;
mod metrics;
mod scenario;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use benchmark::{
    outcome_document, parse_outcome_document, plan, predicted_outcomes, run_benchmark, run_manifest, Benchmark,
    CallRecord, Cell, Manifest,
};
pub use generate::{derive_ground_truth, generate, persona_addresses, remask, retained_count, role_action, MaskedCall, Persona};
pub use metrics::{class_scores, evaluate, fold_of, ClassScores, EvalMetrics, FoldStats, MeanStd, ScopeMetrics};
pub use scenario::{parse_scenarios, IdentityField, Scenario, ScriptStep};

use crate::pipeline::{Outcome, PipelineError};
use crate::signal::SignalError;
use crate::speclang::CheckKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmulationError {
    #[error("alpha must lie in 1..=100, got {0}")]
    Alpha(u32),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("library: {0}")]
    Library(String),
    #[error("predictions and truths are keyed differently (e.g. `{0}`)")]
    KeyMismatch(String),
    #[error("outcome document: {0}")]
    Document(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// One check's kind and outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckLabel {
    pub kind: CheckKind,
    pub outcome: Outcome,
}

/// Outcome per check id of one form.
pub type FormOutcomes = BTreeMap<String, CheckLabel>;
