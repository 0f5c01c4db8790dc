use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_ground_truth, evaluate, generate, CheckLabel, EmulationError, EvalMetrics, FormOutcomes, MaskedCall, Scenario};
use crate::oracle::Oracle;
use crate::pipeline::{debrief, DebriefConfig, PipelineError, QAFormResult};
use crate::speclang::RequirementLibrary;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: String,
    pub alpha: u32,
    pub n: usize,
    pub call_seeds: Vec<u64>,
}

/// Everything needed to regenerate a corpus exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub cells: Vec<Cell>,
}

/// Draws per-call seeds from `seed`, cell by cell in scenario-major order.
pub fn plan(scenarios: &[Scenario], alphas: &[u32], n: usize, seed: u64) -> Manifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::new();
    for s in scenarios {
        for &alpha in alphas {
            cells.push(Cell {
                scenario: s.name.clone(),
                alpha,
                n,
                call_seeds: (0..n).map(|_| rng.next_u64()).collect(),
            });
        }
    }
    Manifest { seed, cells }
}

#[derive(Debug, Clone)]
pub struct CallRecord {
    pub call: MaskedCall,
    pub truth: FormOutcomes,
    /// Absent when the debrief found no responder.
    pub report: Option<QAFormResult>,
    pub prediction: FormOutcomes,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub manifest: Manifest,
    pub records: Vec<CallRecord>,
    pub metrics: EvalMetrics,
}

impl Benchmark {
    pub fn truths(&self) -> BTreeMap<String, FormOutcomes> {
        self.records.iter().map(|r| (r.call.call_id.clone(), r.truth.clone())).collect()
    }

    pub fn predictions(&self) -> BTreeMap<String, FormOutcomes> {
        self.records.iter().map(|r| (r.call.call_id.clone(), r.prediction.clone())).collect()
    }
}

pub fn predicted_outcomes(report: &QAFormResult) -> FormOutcomes {
    report
        .checks
        .iter()
        .map(|c| (c.id.clone(), CheckLabel { kind: c.kind, outcome: c.outcome }))
        .collect()
}

/// Generates, debriefs and scores a fresh corpus.
pub fn run_benchmark(
    library: &RequirementLibrary,
    scenarios: &[Scenario],
    alphas: &[u32],
    n: usize,
    seed: u64,
    oracle: &Oracle,
    folds: usize,
) -> Result<Benchmark, EmulationError> {
    run_manifest(plan(scenarios, alphas, n, seed), library, scenarios, oracle, folds)
}

/// Regenerates the corpus a manifest describes, then debriefs and scores it.
pub fn run_manifest(
    manifest: Manifest,
    library: &RequirementLibrary,
    scenarios: &[Scenario],
    oracle: &Oracle,
    folds: usize,
) -> Result<Benchmark, EmulationError> {
    let mut jobs = Vec::new();
    for cell in &manifest.cells {
        let scenario = scenarios
            .iter()
            .find(|s| s.name == cell.scenario)
            .ok_or_else(|| EmulationError::UnknownScenario(cell.scenario.clone()))?;
        jobs.extend(cell.call_seeds.iter().map(|&seed| (scenario, cell.alpha, seed)));
    }
    let config = DebriefConfig::default();
    let records: Vec<CallRecord> = jobs
        .par_iter()
        .map(|&(scenario, alpha, seed)| {
            let call = generate(scenario, alpha, seed)?;
            let truth = derive_ground_truth(&call, scenario, library)?;
            let report = match debrief(&call.transcript, library, oracle, &config) {
                Ok(r) => Some(r),
                Err(PipelineError::EmptyContext) => None,
                Err(e) => return Err(e.into()),
            };
            let prediction = report.as_ref().map(predicted_outcomes).unwrap_or_default();
            Ok(CallRecord { call, truth, report, prediction })
        })
        .collect::<Result<_, EmulationError>>()?;
    let truths = records.iter().map(|r| (r.call.call_id.clone(), r.truth.clone())).collect();
    let predictions = records.iter().map(|r| (r.call.call_id.clone(), r.prediction.clone())).collect();
    let metrics = evaluate(&predictions, &truths, folds)?;
    Ok(Benchmark { manifest, records, metrics })
}

#[derive(Serialize, Deserialize)]
struct OutcomeDoc {
    call_id: String,
    checks: Vec<OutcomeEntry>,
}

#[derive(Serialize, Deserialize)]
struct OutcomeEntry {
    id: String,
    kind: crate::speclang::CheckKind,
    outcome: crate::pipeline::Outcome,
}

/// Report-shaped document carrying outcomes only.
pub fn outcome_document(call_id: &str, form: &FormOutcomes) -> String {
    let doc = OutcomeDoc {
        call_id: call_id.to_string(),
        checks: form
            .iter()
            .map(|(id, l)| OutcomeEntry { id: id.clone(), kind: l.kind, outcome: l.outcome })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("outcome document serializes")
}

/// Reads the call id and outcomes from an outcome document or a full report.
pub fn parse_outcome_document(source: &str) -> Result<(String, FormOutcomes), EmulationError> {
    let v: serde_json::Value = serde_json::from_str(source).map_err(|e| EmulationError::Document(e.to_string()))?;
    let call_id = v
        .get("call_id")
        .and_then(|c| c.as_str())
        .ok_or_else(|| EmulationError::Document("missing `call_id`".into()))?
        .to_string();
    let checks = v
        .get("checks")
        .and_then(|c| c.as_array())
        .ok_or_else(|| EmulationError::Document("missing `checks`".into()))?;
    let mut form = FormOutcomes::new();
    for c in checks {
        let entry: OutcomeEntry = serde_json::from_value(serde_json::json!({
            "id": c.get("id"),
            "kind": c.get("kind"),
            "outcome": c.get("outcome"),
        }))
        .map_err(|e| EmulationError::Document(format!("{call_id}: {e}")))?;
        form.insert(entry.id, CheckLabel { kind: entry.kind, outcome: entry.outcome });
    }
    Ok((call_id, form))
}
