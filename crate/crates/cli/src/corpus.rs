use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use debrief_core::emulation::{
    evaluate, outcome_document, parse_outcome_document, parse_scenarios, plan, run_manifest, Benchmark,
    EmulationError, FormOutcomes, Manifest, Scenario,
};
use debrief_core::sample;

use crate::config::{write_atomic, EngineArgs, FileConfig, Settings};
use crate::file_stem;

#[derive(clap::Args)]
pub struct EmulateArgs {
    /// Proficiency levels, in percent of required actions kept.
    #[arg(long, value_delimiter = ',', default_value = "25,50,75")]
    alpha: Vec<u32>,
    /// Calls per scenario and proficiency level.
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Scenario file; defaults to the shipped scenarios.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Regenerate the corpus a previous run recorded instead of planning one.
    #[arg(long, conflicts_with_all = ["alpha", "n", "seed"])]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Output directory for the corpus, forms and metrics.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
pub struct EvaluateArgs {
    /// Directory of true forms.
    #[arg(long)]
    truths: PathBuf,
    /// Directory of predicted forms or full reports.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Metrics file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn scenarios(path: Option<&Path>) -> Result<Vec<Scenario>> {
    match path {
        None => Ok(sample::scenarios()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading scenarios {}", p.display()))?;
            parse_scenarios(&text).with_context(|| format!("loading scenarios {}", p.display()))
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn write_corpus(out: &Path, bench: &Benchmark) -> Result<()> {
    write_atomic(&out.join("manifest.json"), &json(&bench.manifest))?;
    for r in &bench.records {
        let stem = file_stem(&r.call.call_id);
        write_atomic(&out.join("calls").join(format!("{stem}.json")), &(r.call.transcript.to_json() + "\n"))?;
        write_atomic(
            &out.join("truths").join(format!("{stem}.json")),
            &(outcome_document(&r.call.call_id, &r.truth) + "\n"),
        )?;
        write_atomic(
            &out.join("predictions").join(format!("{stem}.json")),
            &(outcome_document(&r.call.call_id, &r.prediction) + "\n"),
        )?;
        if let Some(report) = &r.report {
            write_atomic(&out.join("reports").join(format!("{stem}.json")), &(report.to_json() + "\n"))?;
        }
    }
    write_atomic(&out.join("metrics.json"), &json(&bench.metrics))?;
    write_atomic(&out.join("metrics.txt"), &bench.metrics.table())
}

pub fn cmd_emulate(args: EmulateArgs) -> Result<ExitCode> {
    let file = FileConfig::load(args.engine.config.as_deref())?;
    let settings = Settings::resolve(&args.engine, &file)?;
    let library = settings.library()?;
    let oracle = settings.oracle()?;
    let scenarios = scenarios(args.scenarios.as_deref())?;
    let manifest = match &args.manifest {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading manifest {}", p.display()))?;
            serde_json::from_str::<Manifest>(&text).with_context(|| format!("parsing manifest {}", p.display()))?
        }
        None => {
            if args.alpha.is_empty() || args.n == 0 {
                bail!("need at least one alpha and n > 0");
            }
            plan(&scenarios, &args.alpha, args.n, args.seed)
        }
    };
    let bench = run_manifest(manifest, &library, &scenarios, &oracle, args.folds)?;
    write_corpus(&args.out, &bench)?;
    print!("{}", bench.metrics.table());
    let partial = bench.records.iter().filter(|r| r.report.as_ref().is_some_and(|x| x.partial)).count();
    if partial > 0 {
        eprintln!("warning: {partial} report(s) are partial");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn read_forms(dir: &Path) -> Result<BTreeMap<String, FormOutcomes>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut forms = BTreeMap::new();
    for p in paths {
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let (id, form) = parse_outcome_document(&text).with_context(|| format!("loading {}", p.display()))?;
        if forms.insert(id.clone(), form).is_some() {
            bail!("call `{id}` appears twice in {}", dir.display());
        }
    }
    Ok(forms)
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let truths = read_forms(&args.truths)?;
    let predictions = read_forms(&args.predictions)?;
    let metrics = match evaluate(&predictions, &truths, args.folds) {
        Ok(m) => m,
        Err(e @ EmulationError::KeyMismatch(_)) => {
            eprintln!("error: {e}");
            eprintln!("  truths: {} calls, predictions: {} calls", truths.len(), predictions.len());
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(out) = &args.out {
        write_atomic(out, &json(&metrics))?;
    }
    print!("{}", metrics.table());
    Ok(ExitCode::SUCCESS)
}
