use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use debrief_core::oracle::{
    AddressVerifier, Gazetteer, Lexicon, Oracle, PredicateBackend, ResponseCache, RuleBackend, WireBackend,
    WireConfig, DEFAULT_THRESHOLD,
};
use debrief_core::sample;
use debrief_core::speclang::{parse_library, RequirementLibrary};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Rule,
    Wire,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Text,
}

/// Flags shared by every command that runs the engine.
#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Requirement library (JSON). Defaults to the shipped library.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rule")]
    pub oracle: OracleKind,
    /// Rule-backend lexicon. Defaults to the shipped lexicon.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Address gazetteer (TSV). Defaults to the shipped gazetteer.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    /// Persist oracle responses here and replay them on later runs.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Confidence below which an answer is escalated for review.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// TOML file whose keys override the matching flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub library: Option<PathBuf>,
    pub oracle: Option<OracleKind>,
    pub lexicon: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub threshold: Option<f64>,
    #[serde(default)]
    pub tau: BTreeMap<String, u32>,
    pub format: Option<OutputFormat>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Resolved engine settings after the config file is laid over the flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub library: Option<PathBuf>,
    pub oracle: OracleKind,
    pub lexicon: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub threshold: f64,
}

impl Settings {
    pub fn resolve(args: &EngineArgs, file: &FileConfig) -> Result<Self> {
        let threshold = file.threshold.or(args.threshold).unwrap_or(DEFAULT_THRESHOLD);
        if !(0.0..=1.0).contains(&threshold) {
            bail!("threshold must lie in [0, 1], got {threshold}");
        }
        Ok(Self {
            library: file.library.clone().or_else(|| args.library.clone()),
            oracle: file.oracle.unwrap_or(args.oracle),
            lexicon: file.lexicon.clone().or_else(|| args.lexicon.clone()),
            gazetteer: file.gazetteer.clone().or_else(|| args.gazetteer.clone()),
            cache_dir: file.cache_dir.clone().or_else(|| args.cache_dir.clone()),
            threshold,
        })
    }

    pub fn library(&self) -> Result<RequirementLibrary> {
        match &self.library {
            None => Ok(sample::library()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading library {}", p.display()))?;
                parse_library(&text).with_context(|| format!("loading library {}", p.display()))
            }
        }
    }

    pub fn oracle(&self) -> Result<Oracle> {
        let gazetteer = match &self.gazetteer {
            None => sample::gazetteer(),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading gazetteer {}", p.display()))?;
                Gazetteer::parse(&text).with_context(|| format!("loading gazetteer {}", p.display()))?
            }
        };
        let backend: Arc<dyn PredicateBackend> = match self.oracle {
            OracleKind::Rule => {
                let lexicon = match &self.lexicon {
                    None => sample::lexicon(),
                    Some(p) => {
                        let text =
                            fs::read_to_string(p).with_context(|| format!("reading lexicon {}", p.display()))?;
                        Lexicon::parse(&text).with_context(|| format!("loading lexicon {}", p.display()))?
                    }
                };
                Arc::new(RuleBackend::new(lexicon))
            }
            OracleKind::Wire => Arc::new(WireBackend::new(WireConfig::from_env()?)),
        };
        let verifier: Arc<dyn AddressVerifier> = Arc::new(gazetteer);
        let mut oracle = Oracle::new(backend, verifier).with_threshold(self.threshold);
        if let Some(dir) = &self.cache_dir {
            let cache = ResponseCache::persistent(dir).with_context(|| format!("opening cache {}", dir.display()))?;
            oracle = oracle.with_cache(Arc::new(cache));
        }
        Ok(oracle)
    }
}

/// `name=value` τ override.
pub fn parse_tau(s: &str) -> Result<(String, u32), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let k = k.trim();
    if !debrief_core::speclang::is_valid_tau_name(k) {
        return Err(format!("`{k}` is not a valid τ name"));
    }
    let v = v.trim().parse().map_err(|e| format!("τ `{k}`: {e}"))?;
    Ok((k.to_string(), v))
}

/// Writes through a sibling temporary file so readers never see a torn file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}
