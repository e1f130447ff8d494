//! Run configuration: a JSON file, command-line flags, or both, with flags
//! taking precedence field by field.

use anyhow::{anyhow, Context, Result};
use clap::Args;
use errw_lab::ladder::{DepthSpec, Ladder, LadderDescriptor, TreeVertex};
use errw_lab::ratio::parse_positive_rational;
use num::BigRational;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Everything a run can be told.  Fields are optional here; each subcommand
/// resolves the ones it needs and applies its own defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub ladder: LadderDescriptor,
    /// Initial edge weight as a rational string, e.g. "2" or "19/25".
    pub a: Option<String>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    /// Steps per replica.
    pub horizon: Option<u64>,
    /// Observation times.
    pub times: Option<Vec<u64>>,
    pub thresholds: Option<Vec<f64>>,
    pub max_length: Option<usize>,
    /// Path enumeration cap for the exchangeability audit.
    pub cap: Option<usize>,
    /// Conditional-mixture prefix as raw vertex ids, start first.
    pub prefix: Option<Vec<usize>>,
    /// Ladder depths compared by finite-volume.
    pub depths: Option<Vec<u32>>,
    /// Number of random environments for quenched checks.
    pub environments: Option<usize>,
    pub eps: Option<f64>,
    /// Exact-evolution horizon for the reversibility identity.
    pub t_max: Option<u64>,
    pub max_steps: Option<u64>,
    pub alpha: Option<f64>,
    pub max_level: Option<u32>,
    /// Level window `[lo, hi]` for the decay exceedance trend.
    pub level_window: Option<(u32, u32)>,
    /// Canonical edge ids for the log-ratio pair.
    pub edge: Option<usize>,
    pub other: Option<usize>,
    /// Named built-in Gibbs toy, or "all".
    pub toy: Option<String>,
    /// Path to a Gibbs specification JSON file.
    pub gibbs_spec: Option<String>,
    /// Volumes for the thermodynamic-limit curve.
    pub volumes: Option<Vec<usize>>,
    /// Reuse a saved environment sample instead of simulating.
    pub sample: Option<String>,
    pub threads: Option<usize>,
    pub out_dir: Option<String>,
}

/// Flags shared by every subcommand; any flag overrides the matching config
/// file field.
#[derive(Debug, Args, Default)]
pub struct JobArgs {
    /// JSON config file; flags override its fields
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Built-in tree: segment-k or star-k
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON tree file with "vertices" and "edges"
    #[arg(long, value_name = "FILE")]
    pub tree: Option<PathBuf>,
    /// Ladder depth: a number or "unbounded"
    #[arg(long)]
    pub depth: Option<DepthSpec>,
    /// Start vertex label
    #[arg(long)]
    pub v_start: Option<TreeVertex>,
    /// Reference rung as "u,v" tree vertex labels
    #[arg(long)]
    pub rung: Option<String>,

    /// Initial edge weight, a positive rational like "2" or "19/25"
    #[arg(long)]
    pub a: Option<String>,
    /// Master seed; replica i uses the documented derived seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Steps per replica
    #[arg(long, visible_alias = "horizon")]
    pub t: Option<u64>,
    /// Comma-separated observation times
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<u64>>,
    /// Comma-separated tail thresholds
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub max_length: Option<usize>,
    #[arg(long)]
    pub cap: Option<usize>,
    /// Comma-separated raw vertex ids, start first
    #[arg(long, value_delimiter = ',')]
    pub prefix: Option<Vec<usize>>,
    /// Comma-separated depths for finite-volume comparison
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<u32>>,
    /// Number of random environments
    #[arg(long)]
    pub envs: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub t_max: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Two-sample test level
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_level: Option<u32>,
    /// Decay trend window as "lo,hi"
    #[arg(long)]
    pub level_window: Option<String>,
    /// Canonical edge id of the log-ratio numerator
    #[arg(long)]
    pub edge: Option<usize>,
    /// Canonical edge id of the log-ratio denominator
    #[arg(long)]
    pub other: Option<usize>,
    /// Built-in Gibbs toy name, or "all"
    #[arg(long)]
    pub toy: Option<String>,
    /// Gibbs specification JSON file
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Comma-separated volumes for the thermodynamic curve
    #[arg(long, value_delimiter = ',')]
    pub volumes: Option<Vec<usize>>,
    /// Directory of a sample written by `environments`
    #[arg(long, value_name = "DIR")]
    pub sample: Option<PathBuf>,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory (default: $ERRW_OUT_DIR/<command> or
    /// errw-runs/<command>)
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn parse_pair<T: std::str::FromStr>(s: &str, what: &str) -> Result<(T, T)> {
    let (u, v) = s
        .split_once(',')
        .ok_or_else(|| anyhow!("{what} must be two comma-separated values, got {s:?}"))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<T>()
            .map_err(|_| anyhow!("bad value {x:?} in {what}"))
    };
    Ok((parse(u)?, parse(v)?))
}

impl JobArgs {
    /// Loads the config file if given and lays the flags over it.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg: RunConfig = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("malformed config file {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if self.preset.is_some() || self.tree.is_some() {
            // a tree source on the command line replaces the file's source
            cfg.ladder.preset = self.preset.clone();
            cfg.ladder.tree_file = self.tree.as_ref().map(|p| p.display().to_string());
            cfg.ladder.tree = None;
        }
        if let Some(d) = self.depth {
            cfg.ladder.depth = d;
        }
        if let Some(v) = self.v_start {
            cfg.ladder.v_start = Some(v);
        }
        if let Some(r) = &self.rung {
            cfg.ladder.reference_rung = Some(parse_pair(r, "--rung")?);
        }
        macro_rules! lay {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$flag { cfg.$field = Some(v.clone()); })*
            };
        }
        lay! {
            a => a, seed => seed, replicas => replicas, t => horizon,
            times => times, thresholds => thresholds, max_length => max_length,
            cap => cap, prefix => prefix, depths => depths, envs => environments,
            eps => eps, t_max => t_max, max_steps => max_steps, alpha => alpha,
            max_level => max_level, edge => edge, other => other, toy => toy,
            volumes => volumes, threads => threads,
        }
        if let Some(w) = &self.level_window {
            cfg.level_window = Some(parse_pair(w, "--level-window")?);
        }
        if let Some(p) = &self.spec {
            cfg.gibbs_spec = Some(p.display().to_string());
        }
        if let Some(p) = &self.sample {
            cfg.sample = Some(p.display().to_string());
        }
        if let Some(p) = &self.out {
            cfg.out_dir = Some(p.display().to_string());
        }
        Ok(cfg)
    }
}

impl RunConfig {
    /// The initial weight; required, there is no sensible default.
    pub fn a(&self) -> Result<BigRational> {
        let s = self.a.as_deref().ok_or_else(|| {
            anyhow!("missing required value a: pass --a <RATIONAL> or set \"a\" in the config file")
        })?;
        parse_positive_rational(s).with_context(|| format!("bad a {s:?}"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    /// Builds the ladder, defaulting to segment-2 when no tree was named.
    /// `base` anchors a relative tree file from the config's own directory.
    pub fn ladder(&self, base: Option<&Path>) -> Result<Ladder> {
        let mut descriptor = self.ladder.clone();
        if descriptor.preset.is_none() && descriptor.tree_file.is_none() && descriptor.tree.is_none()
        {
            descriptor.preset = Some("segment-2".to_string());
        }
        Ok(descriptor.build(base)?)
    }

}
