//! Run configuration: TOML file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sparsebump::lattice::DEFAULT_MAX_DEPTH;

pub const MAX_DEPTH_ENV: &str = "SPARSEBUMP_MAX_DEPTH";

/// Values as read from a config file; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub depth: Option<u32>,
    pub seed: Option<u64>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
    pub norm_method: Option<String>,
    pub out: Option<PathBuf>,
    pub law: Option<String>,
    pub profile: Option<String>,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub objective: Option<String>,
    pub iterations: Option<usize>,
    pub proposal: Option<String>,
    pub step: Option<f64>,
    pub temperature: Option<f64>,
    pub cooling: Option<f64>,
    pub mutation_rate: Option<f64>,
    pub log2_bound: Option<f64>,
    pub chains: Option<usize>,
    pub ladder_to: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub depths: Option<Vec<u32>>,
    pub ps: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub seeds: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved global settings, echoed into every artifact.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub depth: u32,
    pub seed: u64,
    pub p: f64,
    pub delta: f64,
    pub norm_method: String,
    pub out: PathBuf,
    pub law: String,
    pub profile: String,
    pub max_depth: u32,
    #[serde(skip_serializing_if = "is_default")]
    pub search: SearchSection,
    #[serde(skip_serializing_if = "is_default")]
    pub sweep: SweepSection,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// Global flags as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct FlagValues {
    pub depth: Option<u32>,
    pub seed: Option<u64>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
    pub norm_method: Option<String>,
    pub out: Option<PathBuf>,
    pub law: Option<String>,
    pub profile: Option<String>,
}

pub fn max_depth_from_env() -> Result<u32> {
    match std::env::var(MAX_DEPTH_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{MAX_DEPTH_ENV}={v:?} is not a depth")),
        Err(_) => Ok(DEFAULT_MAX_DEPTH),
    }
}

impl RunConfig {
    pub fn resolve(command: &str, file: FileConfig, flags: FlagValues, max_depth: u32) -> Result<Self> {
        let cfg = RunConfig {
            command: command.to_string(),
            depth: flags.depth.or(file.depth).unwrap_or(6),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            p: flags.p.or(file.p).unwrap_or(2.0),
            delta: flags.delta.or(file.delta).unwrap_or(0.2),
            norm_method: flags.norm_method.or(file.norm_method).unwrap_or_else(|| "auto".into()),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            law: flags.law.or(file.law).unwrap_or_else(|| "lognormal".into()),
            profile: flags.profile.or(file.profile).unwrap_or_else(|| "random".into()),
            max_depth,
            search: file.search,
            sweep: file.sweep,
        };
        if cfg.depth < 1 || cfg.depth > max_depth {
            bail!("depth {} outside 1..={} (cap from {MAX_DEPTH_ENV})", cfg.depth, max_depth);
        }
        if !(cfg.p > 1.0 && cfg.p.is_finite()) {
            bail!("p must satisfy 1 < p < ∞, got {}", cfg.p);
        }
        if !(cfg.delta > 0.0 && cfg.delta.is_finite()) {
            bail!("delta must be positive, got {}", cfg.delta);
        }
        Ok(cfg)
    }
}
