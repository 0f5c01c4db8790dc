//! `debrief`: command-line front end.
//!
//! Exit status: 0 on success, 1 on an input or library error, 2 when any
//! report is partial because the oracle failed.

mod config;
mod corpus;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use debrief_core::pipeline::{debrief, DebriefConfig, QAFormResult};
use debrief_core::signal::{load_transcript, TranscriptFormat};
use debrief_core::speclang::parse_library;
use rayon::prelude::*;

use config::{parse_tau, write_atomic, EngineArgs, FileConfig, OutputFormat, Settings};

#[derive(Parser)]
#[command(name = "debrief", version, about = "Debrief emergency-call transcripts against temporal-logic QA requirements")]
struct Cli {
    /// Worker threads for per-call work; defaults to one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill the QA form of one or more transcripts.
    Debrief(DebriefArgs),
    /// Check a requirement library and list every violation.
    Validate {
        /// Library to check; defaults to the shipped library.
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Generate a scripted corpus, debrief it and score the result.
    Emulate(corpus::EmulateArgs),
    /// Score predicted forms against true forms.
    Evaluate(corpus::EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    /// `.json` files are turn lists, everything else is plain dialogue.
    Auto,
    Json,
    Plain,
}

#[derive(clap::Args)]
struct DebriefArgs {
    /// Transcript file; repeat to debrief several calls.
    #[arg(long, required = true)]
    transcript: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    format_in: InputFormat,
    #[command(flatten)]
    engine: EngineArgs,
    /// Window constant override, e.g. `--tau tau1=8`.
    #[arg(long, value_parser = parse_tau)]
    tau: Vec<(String, u32)>,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
    /// Report file, or a directory when several transcripts are given.
    /// Reports go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the input-error status; 2 means partial.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Debrief(args) => cmd_debrief(args),
        Command::Validate { library } => cmd_validate(library.as_deref()),
        Command::Emulate(args) => corpus::cmd_emulate(args),
        Command::Evaluate(args) => corpus::cmd_evaluate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn transcript_format(path: &Path, flag: InputFormat) -> TranscriptFormat {
    match flag {
        InputFormat::Json => TranscriptFormat::JsonTurns,
        InputFormat::Plain => TranscriptFormat::PlainDialogue,
        InputFormat::Auto if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => {
            TranscriptFormat::JsonTurns
        }
        InputFormat::Auto => TranscriptFormat::PlainDialogue,
    }
}

fn render(report: &QAFormResult, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => report.to_json() + "\n",
        OutputFormat::Text => report.to_text(),
    }
}

fn cmd_debrief(args: DebriefArgs) -> Result<ExitCode> {
    let file = FileConfig::load(args.engine.config.as_deref())?;
    let settings = Settings::resolve(&args.engine, &file)?;
    let format = file.format.unwrap_or(args.format);
    let library = settings.library()?;
    let oracle = settings.oracle()?;
    let mut tau_overrides: BTreeMap<String, u32> = args.tau.into_iter().collect();
    tau_overrides.extend(file.tau);
    let config = DebriefConfig { tau_overrides };

    let mut transcripts = Vec::with_capacity(args.transcript.len());
    for path in &args.transcript {
        let bytes = fs::read(path).with_context(|| format!("reading transcript {}", path.display()))?;
        let t = load_transcript(&bytes, transcript_format(path, args.format_in))
            .with_context(|| format!("loading transcript {}", path.display()))?;
        transcripts.push((path, t));
    }
    let reports: Vec<QAFormResult> = transcripts
        .par_iter()
        .map(|(path, t)| debrief(t, &library, &oracle, &config).with_context(|| format!("debriefing {}", path.display())))
        .collect::<Result<_>>()?;

    match (&args.out, reports.as_slice()) {
        (None, _) => {
            for r in &reports {
                print!("{}", render(r, format));
            }
        }
        (Some(out), [single]) if !out.is_dir() => write_atomic(out, &render(single, format))?,
        (Some(dir), _) => {
            let ext = match format {
                OutputFormat::Json => "json",
                OutputFormat::Text => "txt",
            };
            let mut seen = std::collections::BTreeSet::new();
            for r in &reports {
                if !seen.insert(r.call_id.as_str()) {
                    bail!("two transcripts share call id `{}`", r.call_id);
                }
                write_atomic(&dir.join(format!("{}.{ext}", file_stem(&r.call_id))), &render(r, format))?;
            }
        }
    }
    let partial = reports.iter().filter(|r| r.partial).count();
    if partial > 0 {
        eprintln!("warning: {partial} report(s) are partial; see `unevaluated`");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

/// Call id made safe for use as a file name.
pub(crate) fn file_stem(call_id: &str) -> String {
    call_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn cmd_validate(library: Option<&Path>) -> Result<ExitCode> {
    let (name, text) = match library {
        None => ("shipped library".to_string(), debrief_core::sample::LIBRARY.to_string()),
        Some(p) => (
            p.display().to_string(),
            fs::read_to_string(p).with_context(|| format!("reading library {}", p.display()))?,
        ),
    };
    match parse_library(&text) {
        Ok(lib) => {
            println!(
                "{name}: valid ({} requirements, {} checks, {} templates, {} refinement rules)",
                lib.requirements().count(),
                lib.checks().count(),
                lib.form_templates.len(),
                lib.refinement_rules.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            println!("{name}: {} violation(s)", e.violations.len());
            for v in &e.violations {
                println!("  - {v}");
            }
            Ok(ExitCode::from(1))
        }
    }
}
