//! Survival curves of the walker's level at fixed times: localization
//! shows up as a log-linear decay of `P(|X_t| >= n)` in `n`, uniformly
//! over the probed times.

use super::{level_checkpoints, HarnessError, LevelCheckpoints, MIN_BIN_COUNT};
use crate::harness::report::Verdict;
use crate::ladder::Ladder;
use crate::stats::{loglinear_fit, wilson_ci, Ci, FitResult};
use num::BigRational;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const R2_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailPoint {
    pub level: u32,
    /// Replicas with `|X_t| >= level`.
    pub hits: u64,
    pub survival: f64,
    pub ci: Ci,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailCurve {
    pub t: u64,
    pub replicas: u64,
    pub ci_method: String,
    pub points: Vec<TailPoint>,
}

impl TailCurve {
    /// Builds the suffix-sum survival curve; nonincreasing by construction
    /// and exactly one at level zero.
    pub fn from_levels(t: u64, levels: &[u32]) -> Result<Self, HarnessError> {
        let max = levels.iter().copied().max().unwrap_or(0);
        let mut hist = vec![0u64; max as usize + 1];
        for &l in levels {
            hist[l as usize] += 1;
        }
        let mut points = Vec::with_capacity(hist.len());
        let mut hits = 0u64;
        for level in (0..hist.len()).rev() {
            hits += hist[level];
            points.push((level as u32, hits));
        }
        points.reverse();
        let n = levels.len() as u64;
        let points = points
            .into_iter()
            .map(|(level, hits)| {
                Ok(TailPoint {
                    level,
                    hits,
                    survival: hits as f64 / n as f64,
                    ci: wilson_ci(hits, n)?,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok(TailCurve {
            t,
            replicas: n,
            ci_method: "wilson-95".to_string(),
            points,
        })
    }

    fn fit(&self, min_count: u64) -> Result<FitResult, HarnessError> {
        // level 0 is identically one; the decay claim concerns the tail
        let bins: Vec<(f64, u64)> = self
            .points
            .iter()
            .filter(|p| p.level >= 1)
            .map(|p| (p.level as f64, p.hits))
            .collect();
        Ok(loglinear_fit(&bins, min_count)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub min_count: u64,
    pub curves: Vec<TailCurve>,
    /// One fit per curve, same order.
    pub fits: Vec<FitResult>,
    /// Fit pooled over all curves.
    pub pooled_fit: FitResult,
    pub overlap: bool,
    pub verdicts: Vec<Verdict>,
}

/// Builds the report from precomputed level checkpoints; `which` selects
/// the checkpoint indices to turn into curves.
pub fn tails_from_checkpoints(
    samples: &LevelCheckpoints,
    which: &[usize],
) -> Result<TailReport, HarnessError> {
    let min_count = MIN_BIN_COUNT;
    let mut curves = Vec::new();
    for &j in which {
        let levels: Vec<u32> = samples.at.iter().map(|row| row[j]).collect();
        curves.push(TailCurve::from_levels(samples.times[j], &levels)?);
    }
    let mut fits = Vec::new();
    let mut pooled: Vec<(f64, u64)> = Vec::new();
    let mut verdicts = Vec::new();
    for curve in &curves {
        let fit = curve.fit(min_count).map_err(|e| match e {
            HarnessError::Stats(_) => HarnessError::InsufficientOccupancy {
                level: 1,
                min_count,
            },
            other => other,
        })?;
        verdicts.push(Verdict::new(
            "AC6",
            fit.slope < 0.0,
            format!("t={}: fitted slope {:.4} < 0", curve.t, fit.slope),
        ));
        verdicts.push(Verdict::new(
            "AC6",
            fit.r_squared >= R2_THRESHOLD,
            format!(
                "t={}: R^2 {:.4} >= {} over {} bins",
                curve.t,
                fit.r_squared,
                R2_THRESHOLD,
                fit.bins_used.len()
            ),
        ));
        pooled.extend(
            curve
                .points
                .iter()
                .filter(|p| p.level >= 1)
                .map(|p| (p.level as f64, p.hits)),
        );
        fits.push(fit);
    }
    let pooled_fit = loglinear_fit(&pooled, min_count)?;

    // uniformity proxy: confidence intervals of every pair of curves
    // overlap at every level
    let mut overlap = true;
    let mut worst = String::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let levels = curves[i].points.len().max(curves[j].points.len());
            for level in 0..levels {
                let ci_of = |c: &TailCurve| {
                    c.points
                        .get(level)
                        .map(|p| p.ci)
                        .unwrap_or(Ci { lo: 0.0, hi: 0.0 })
                };
                let (a, b) = (ci_of(&curves[i]), ci_of(&curves[j]));
                if !a.overlaps(&b) {
                    overlap = false;
                    worst = format!(
                        "t={} vs t={} disagree at level {level}",
                        curves[i].t, curves[j].t
                    );
                }
            }
        }
    }
    verdicts.push(Verdict::new(
        "AC6",
        overlap,
        if overlap {
            "survival curves overlap within CIs at every level".to_string()
        } else {
            worst
        },
    ));
    Ok(TailReport {
        min_count,
        curves,
        fits,
        pooled_fit,
        overlap,
        verdicts,
    })
}

/// Runs the walks and builds survival curves for each requested time.
pub fn tail_experiment(
    ladder: &Arc<Ladder>,
    a: &BigRational,
    times: &[u64],
    replicas: usize,
    master_seed: u64,
) -> Result<TailReport, HarnessError> {
    let samples = level_checkpoints(ladder, a, times, replicas, master_seed)?;
    let which: Vec<usize> = (0..samples.times.len()).collect();
    tails_from_checkpoints(&samples, &which)
}
