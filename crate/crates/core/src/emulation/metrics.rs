use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmulationError, FormOutcomes};
use crate::pipeline::Outcome;
use crate::speclang::CheckKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Checks whose true outcome is this class.
    pub support: usize,
    pub predicted: usize,
}

/// Scores over one group of checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeMetrics {
    pub checks: usize,
    pub per_class: BTreeMap<Outcome, ClassScores>,
    /// Mean F1 over classes that occur in truth or prediction; 1 when none do.
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub k: usize,
    /// Forms per fold; sums to the corpus size.
    pub sizes: Vec<usize>,
    pub unconditional_macro_f1: MeanStd,
    pub conditional_macro_f1: MeanStd,
    pub all_macro_f1: MeanStd,
    pub form_exact_match: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub forms: usize,
    pub unconditional: ScopeMetrics,
    pub conditional: ScopeMetrics,
    pub all: ScopeMetrics,
    /// Share of forms whose every check outcome is correct.
    pub form_exact_match: f64,
    pub folds: FoldStats,
}

#[derive(Default, Clone)]
struct Confusion {
    tp: BTreeMap<Outcome, usize>,
    fp: BTreeMap<Outcome, usize>,
    fn_: BTreeMap<Outcome, usize>,
    support: BTreeMap<Outcome, usize>,
    predicted: BTreeMap<Outcome, usize>,
    checks: usize,
}

impl Confusion {
    fn add(&mut self, truth: Option<Outcome>, pred: Option<Outcome>) {
        self.checks += 1;
        if let Some(t) = truth {
            *self.support.entry(t).or_default() += 1;
        }
        if let Some(p) = pred {
            *self.predicted.entry(p).or_default() += 1;
        }
        match (truth, pred) {
            (Some(t), Some(p)) if t == p => *self.tp.entry(t).or_default() += 1,
            _ => {
                if let Some(t) = truth {
                    *self.fn_.entry(t).or_default() += 1;
                }
                if let Some(p) = pred {
                    *self.fp.entry(p).or_default() += 1;
                }
            }
        }
    }

    fn scores(&self) -> ScopeMetrics {
        let get = |m: &BTreeMap<Outcome, usize>, c| m.get(&c).copied().unwrap_or(0);
        let mut per_class = BTreeMap::new();
        for c in Outcome::ALL {
            let (support, predicted) = (get(&self.support, c), get(&self.predicted, c));
            if support == 0 && predicted == 0 {
                continue;
            }
            per_class.insert(c, class_scores(get(&self.tp, c), get(&self.fp, c), get(&self.fn_, c)));
        }
        let macro_f1 = if per_class.is_empty() {
            1.0
        } else {
            per_class.values().map(|s: &ClassScores| s.f1).sum::<f64>() / per_class.len() as f64
        };
        ScopeMetrics {
            checks: self.checks,
            per_class,
            macro_f1,
        }
    }
}

/// Precision, recall and F1 from raw counts; a zero denominator scores 0.
pub fn class_scores(tp: usize, fp: usize, fn_: usize) -> ClassScores {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassScores {
        precision,
        recall,
        f1,
        support: tp + fn_,
        predicted: tp + fp,
    }
}

/// Fold of a call: its id's digest modulo `k`.
pub fn fold_of(call_id: &str, k: usize) -> usize {
    let d = Sha256::digest(call_id.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    (u64::from_be_bytes(b) % k.max(1) as u64) as usize
}

struct Tallies {
    unconditional: Confusion,
    conditional: Confusion,
    all: Confusion,
    forms: usize,
    exact: usize,
}

impl Tallies {
    fn new() -> Self {
        Self {
            unconditional: Confusion::default(),
            conditional: Confusion::default(),
            all: Confusion::default(),
            forms: 0,
            exact: 0,
        }
    }

    fn add_form(&mut self, truth: &FormOutcomes, pred: &FormOutcomes) {
        self.forms += 1;
        if truth == pred {
            self.exact += 1;
        }
        let ids: BTreeSet<&String> = truth.keys().chain(pred.keys()).collect();
        for id in ids {
            let (t, p) = (truth.get(id), pred.get(id));
            let kind = t.or(p).map(|l| l.kind).unwrap_or(CheckKind::Conditional);
            let (t, p) = (t.map(|l| l.outcome), p.map(|l| l.outcome));
            self.all.add(t, p);
            if kind.is_unconditional() {
                self.unconditional.add(t, p);
            } else {
                self.conditional.add(t, p);
            }
        }
    }

    fn exact_rate(&self) -> f64 {
        if self.forms == 0 {
            0.0
        } else {
            self.exact as f64 / self.forms as f64
        }
    }
}

/// Scores predicted forms against true forms, keyed by call id.
pub fn evaluate(
    predictions: &BTreeMap<String, FormOutcomes>,
    truths: &BTreeMap<String, FormOutcomes>,
    k: usize,
) -> Result<EvalMetrics, EmulationError> {
    if predictions.keys().ne(truths.keys()) {
        let p: BTreeSet<&String> = predictions.keys().collect();
        let t: BTreeSet<&String> = truths.keys().collect();
        let example = p.symmetric_difference(&t).next().map(|s| s.to_string()).unwrap_or_default();
        return Err(EmulationError::KeyMismatch(example));
    }
    let k = k.max(1);
    let mut whole = Tallies::new();
    let mut folds: Vec<Tallies> = (0..k).map(|_| Tallies::new()).collect();
    for (id, truth) in truths {
        let pred = &predictions[id];
        whole.add_form(truth, pred);
        folds[fold_of(id, k)].add_form(truth, pred);
    }
    let used: Vec<&Tallies> = folds.iter().filter(|f| f.forms > 0).collect();
    let stat = |f: &dyn Fn(&Tallies) -> f64| MeanStd::of(&used.iter().map(|t| f(t)).collect::<Vec<_>>());
    Ok(EvalMetrics {
        forms: whole.forms,
        unconditional: whole.unconditional.scores(),
        conditional: whole.conditional.scores(),
        all: whole.all.scores(),
        form_exact_match: whole.exact_rate(),
        folds: FoldStats {
            k,
            sizes: folds.iter().map(|f| f.forms).collect(),
            unconditional_macro_f1: stat(&|t| t.unconditional.scores().macro_f1),
            conditional_macro_f1: stat(&|t| t.conditional.scores().macro_f1),
            all_macro_f1: stat(&|t| t.all.scores().macro_f1),
            form_exact_match: stat(&|t| t.exact_rate()),
        },
    })
}

impl EvalMetrics {
    /// Table with unconditional, conditional and whole-form columns.
    pub fn table(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let cell = |m: &ScopeMetrics, c: Outcome| {
            m.per_class
                .get(&c)
                .map(|x| format!("{:>6.2}", 100.0 * x.f1))
                .unwrap_or_else(|| format!("{:>6}", "-"))
        };
        let _ = writeln!(s, "{:<10} {:>13} {:>13} {:>13}", "class", "unconditional", "conditional", "all");
        for c in Outcome::ALL {
            let _ = writeln!(
                s,
                "{:<10} {:>13} {:>13} {:>13}",
                c.label(),
                cell(&self.unconditional, c),
                cell(&self.conditional, c),
                cell(&self.all, c)
            );
        }
        let pm = |m: MeanStd| format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std);
        let _ = writeln!(
            s,
            "{:<10} {:>13} {:>13} {:>13}",
            "macro F1",
            pm(self.folds.unconditional_macro_f1),
            pm(self.folds.conditional_macro_f1),
            pm(self.folds.all_macro_f1)
        );
        let _ = writeln!(
            s,
            "form exact match: {:.2}% ({} forms, {}-fold {})",
            100.0 * self.form_exact_match,
            self.forms,
            self.folds.k,
            pm(self.folds.form_exact_match)
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulation::CheckLabel;

    fn form(pairs: &[(&str, CheckKind, Outcome)]) -> FormOutcomes {
        pairs
            .iter()
            .map(|(id, kind, outcome)| (id.to_string(), CheckLabel { kind: *kind, outcome: *outcome }))
            .collect()
    }

    #[test]
    fn hand_computed_scores() {
        let s = class_scores(8, 2, 2);
        assert!((s.precision - 0.8).abs() < 1e-12);
        assert!((s.recall - 0.8).abs() < 1e-12);
        assert!((s.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn perfect_agreement() {
        let f = form(&[
            ("address", CheckKind::Address, Outcome::Yes),
            ("x", CheckKind::Conditional, Outcome::Na),
        ]);
        let truths: BTreeMap<String, FormOutcomes> = (0..10).map(|i| (format!("c{i}"), f.clone())).collect();
        let m = evaluate(&truths, &truths, 5).unwrap();
        assert_eq!(m.form_exact_match, 1.0);
        assert_eq!(m.all.macro_f1, 1.0);
        assert_eq!(m.folds.sizes.iter().sum::<usize>(), 10);
    }

    #[test]
    fn one_wrong_check_costs_one_form() {
        let good = form(&[("address", CheckKind::Address, Outcome::Yes)]);
        let bad = form(&[("address", CheckKind::Address, Outcome::No)]);
        let truths: BTreeMap<String, FormOutcomes> = (0..4).map(|i| (format!("c{i}"), good.clone())).collect();
        let mut preds = truths.clone();
        preds.insert("c2".into(), bad);
        let m = evaluate(&preds, &truths, 2).unwrap();
        assert_eq!(m.form_exact_match, 0.75);
    }

    #[test]
    fn key_mismatch() {
        let f = form(&[]);
        let a: BTreeMap<String, FormOutcomes> = [("a".to_string(), f.clone())].into();
        let b: BTreeMap<String, FormOutcomes> = [("b".to_string(), f)].into();
        assert!(matches!(evaluate(&a, &b, 5), Err(EmulationError::KeyMismatch(_))));
    }
}
