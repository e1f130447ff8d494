//! Artifact layout: one directory per run with `manifest.json`,
//! `summary.json`, and per-experiment CSV/JSON result files.

use anyhow::{Context, Result};
use errw_lab::harness::report::Verdict;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct RunWriter {
    dir: PathBuf,
    results: Vec<String>,
}

impl RunWriter {
    pub fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(RunWriter {
            dir,
            results: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str) {
        self.results.push(name.to_string());
    }

    /// Writes a CSV with the given header; rows are preformatted lines.
    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
        text.push_str(header);
        text.push('\n');
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        std::fs::write(self.dir.join(name), text)
            .with_context(|| format!("cannot write {name}"))?;
        self.record(name);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).context("serialize report")?;
        std::fs::write(self.dir.join(name), text)
            .with_context(|| format!("cannot write {name}"))?;
        self.record(name);
        Ok(())
    }

    /// A subdirectory for bulk artifacts (environment samples).
    pub fn subdir(&mut self, name: &str) -> PathBuf {
        self.record(name);
        self.dir.join(name)
    }

    pub fn results(&self) -> &[String] {
        &self.results
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    passed: bool,
    checks: usize,
    verdicts: &'a [Verdict],
}

/// Writes `summary.json` and returns whether every verdict passed.
pub fn write_summary(writer: &mut RunWriter, verdicts: &[Verdict]) -> Result<bool> {
    let passed = verdicts.iter().all(|v| v.passed);
    writer.json(
        "summary.json",
        &Summary {
            passed,
            checks: verdicts.len(),
            verdicts,
        },
    )?;
    Ok(passed)
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Acceptance-criterion ids this run checks (empty for diagnostics).
    pub acceptance: Vec<String>,
    pub rng_family: &'static str,
    pub seed_derivation: &'static str,
    pub threads: serde_json::Value,
    /// Wall time is informational; result files do not depend on it.
    pub wall_time_s: f64,
    /// The merged configuration the run was started with.
    pub config: &'a crate::config::RunConfig,
    /// Fully resolved parameters, defaults included.
    pub effective: serde_json::Value,
    pub results: Vec<String>,
}

pub fn write_manifest(writer: &RunWriter, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).context("serialize manifest")?;
    std::fs::write(writer.dir().join("manifest.json"), text).context("cannot write manifest.json")
}
