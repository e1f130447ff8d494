//! Growth of the running maximum level: logarithmic growth separates the
//! reinforced walk from diffusive behavior by orders of magnitude across
//! two time decades.

use super::{level_checkpoints, HarnessError, LevelCheckpoints};
use crate::harness::report::Verdict;
use crate::ladder::Ladder;
use crate::stats::{least_squares, quantile, FitResult};
use num::BigRational;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Two-decade median growth beyond this factor rejects logarithmic range.
pub const RATIO_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangeRow {
    pub t: u64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
    pub max: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangeReport {
    pub rows: Vec<RangeRow>,
    /// median at the last time over median at the first.
    pub ratio: f64,
    pub ratio_threshold: f64,
    /// Time decades spanned, `log10(t_last / t_first)`.
    pub decades: f64,
    /// Median against `ln t`.
    pub fit: FitResult,
    pub verdicts: Vec<Verdict>,
}

/// Builds the report from precomputed checkpoints; `which` selects the
/// checkpoint indices.
pub fn range_from_checkpoints(
    samples: &LevelCheckpoints,
    which: &[usize],
) -> Result<RangeReport, HarnessError> {
    if which.len() < 2 {
        return Err(HarnessError::TooFew {
            what: "range checkpoint times",
            need: 2,
            got: which.len(),
        });
    }
    let mut rows = Vec::new();
    for &j in which {
        let mut maxima: Vec<f64> = samples.max.iter().map(|row| row[j] as f64).collect();
        maxima.sort_by(|a, b| a.total_cmp(b));
        rows.push(RangeRow {
            t: samples.times[j],
            q25: quantile(&maxima, 0.25)?,
            median: quantile(&maxima, 0.5)?,
            q75: quantile(&maxima, 0.75)?,
            q90: quantile(&maxima, 0.9)?,
            max: *maxima.last().unwrap() as u32,
        });
    }
    let first = rows.first().unwrap();
    let last = rows.last().unwrap();
    let ratio = if first.median > 0.0 {
        last.median / first.median
    } else {
        f64::INFINITY
    };
    let decades = (last.t as f64 / first.t as f64).log10();
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.t as f64).ln(), r.median))
        .collect();
    let fit = least_squares(&points)?;

    let mut verdicts = Vec::new();
    let medians: Vec<f64> = rows.iter().map(|r| r.median).collect();
    let nondecreasing = medians.windows(2).all(|w| w[1] >= w[0]);
    verdicts.push(Verdict::new(
        "AC7",
        nondecreasing,
        format!("medians of the running maximum nondecreasing: {medians:?}"),
    ));
    verdicts.push(Verdict::new(
        "AC7",
        ratio <= RATIO_THRESHOLD,
        format!(
            "median ratio {ratio:.3} over {decades:.1} decades <= {RATIO_THRESHOLD} \
             (diffusive growth would give about {:.0})",
            (last.t as f64 / first.t as f64).sqrt()
        ),
    ));
    verdicts.push(Verdict::new(
        "AC7",
        fit.slope > 0.0,
        format!("median vs ln t slope {:.4} > 0 (R^2 {:.3})", fit.slope, fit.r_squared),
    ));
    Ok(RangeReport {
        rows,
        ratio,
        ratio_threshold: RATIO_THRESHOLD,
        decades,
        fit,
        verdicts,
    })
}

/// Runs the walks over geometric times and diagnoses the growth law of the
/// running maximum level.
pub fn range_experiment(
    ladder: &Arc<Ladder>,
    a: &BigRational,
    times: &[u64],
    replicas: usize,
    master_seed: u64,
) -> Result<RangeReport, HarnessError> {
    let samples = level_checkpoints(ladder, a, times, replicas, master_seed)?;
    let which: Vec<usize> = (0..samples.times.len()).collect();
    range_from_checkpoints(&samples, &which)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::report;
    use crate::ladder::{Depth, FiniteTree};

    #[test]
    fn running_maximum_grows_slowly() {
        let ladder = Arc::new(
            Ladder::with_defaults(FiniteTree::segment(2).unwrap(), Depth::Finite(14)).unwrap(),
        );
        let a = BigRational::from_integer(2.into());
        let rep = range_experiment(&ladder, &a, &[100, 1000, 10000], 600, 0xAC7_0001).unwrap();
        assert_eq!(rep.rows.len(), 3);
        let medians: Vec<f64> = rep.rows.iter().map(|r| r.median).collect();
        assert!(medians.windows(2).all(|w| w[1] >= w[0]), "{medians:?}");
        assert!(rep.fit.slope > 0.0);
        assert!(rep.ratio < 5.0, "ratio {}", rep.ratio);
        assert!(rep.rows.iter().all(|r| r.q25 <= r.median && r.median <= r.q75));
        // quantile table sane at the tail
        assert!(rep.rows.iter().all(|r| r.q90 <= r.max as f64));
        assert!(!report::render(&rep.verdicts).is_empty());
    }

    #[test]
    fn needs_two_checkpoints() {
        let ladder = Arc::new(
            Ladder::with_defaults(FiniteTree::segment(2).unwrap(), Depth::Finite(4)).unwrap(),
        );
        let a = BigRational::from_integer(1.into());
        assert!(matches!(
            range_experiment(&ladder, &a, &[50], 10, 1),
            Err(HarnessError::TooFew { .. })
        ));
    }
}
