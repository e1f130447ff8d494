//! Stability of the random environment's low-level marginals as the ladder
//! deepens: two-sample KS distances of reference-normalized edge weights
//! between depths, with a same-depth split-half baseline.

use super::HarnessError;
use crate::env_estimate::{sample_environments, EnvironmentSample};
use crate::harness::report::Verdict;
use crate::ladder::{Depth, EdgeId, EdgeKind, FiniteTree, Ladder};
use crate::seed;
use crate::stats::{ks_critical, ks_statistic};
use num::BigRational;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsRow {
    pub edge: usize,
    pub level: u32,
    pub kind: String,
    pub ks: f64,
    pub critical: f64,
    pub n: usize,
    pub m: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteVolumeReport {
    pub alpha: f64,
    pub max_level: u32,
    /// Cross-depth comparisons, one row per shared low-level edge.
    pub rows: Vec<KsRow>,
    /// Split halves of the deeper sample: distances expected at noise level.
    pub baseline: Vec<KsRow>,
    pub verdicts: Vec<Verdict>,
}

fn reference_values(
    sample: &EnvironmentSample,
    edge: EdgeId,
) -> Result<Vec<f64>, HarnessError> {
    sample
        .environments
        .iter()
        .map(|env| Ok(env.to_reference()?.weight(edge)))
        .collect()
}

fn ks_rows(
    ladder: &Ladder,
    edges: &[EdgeId],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    alpha: f64,
) -> Result<Vec<KsRow>, HarnessError> {
    edges
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let mut a = xs[i].clone();
            let mut b = ys[i].clone();
            a.sort_by(|p, q| p.total_cmp(q));
            b.sort_by(|p, q| p.total_cmp(q));
            let ks = ks_statistic(&a, &b)?;
            let critical = ks_critical(a.len(), b.len(), alpha)?;
            Ok(KsRow {
                edge: e.0,
                level: ladder.level_of_edge(e)?,
                kind: match ladder.edge_kind(e) {
                    EdgeKind::Rung { .. } => "rung".to_string(),
                    EdgeKind::Horizontal { .. } => "horizontal".to_string(),
                },
                ks,
                critical,
                n: a.len(),
                m: b.len(),
                pass: ks < critical,
            })
        })
        .collect()
}

/// Compares the low-level reference-normalized marginals of two samples.
/// The shallower ladder's edge ids are a prefix of the deeper one's, so
/// shared edges carry the same id in both.
pub fn compare_samples(
    shallow: &EnvironmentSample,
    deep: &EnvironmentSample,
    max_level: u32,
    alpha: f64,
) -> Result<FiniteVolumeReport, HarnessError> {
    if shallow.is_empty() || deep.is_empty() {
        return Err(HarnessError::TooFew {
            what: "environments",
            need: 1,
            got: 0,
        });
    }
    let lad_a = shallow.environments[0].ladder();
    let lad_b = deep.environments[0].ladder();
    let shared = lad_a.edge_count()?.min(lad_b.edge_count()?);
    let edges: Vec<EdgeId> = (0..shared)
        .map(EdgeId)
        .filter(|&e| lad_a.level_of_edge(e).map(|l| l <= max_level).unwrap_or(false))
        .collect();
    if edges.is_empty() {
        return Err(HarnessError::TooFew {
            what: "shared low-level edges",
            need: 1,
            got: 0,
        });
    }

    let xs: Vec<Vec<f64>> = edges
        .iter()
        .map(|&e| reference_values(shallow, e))
        .collect::<Result<_, _>>()?;
    let ys: Vec<Vec<f64>> = edges
        .iter()
        .map(|&e| reference_values(deep, e))
        .collect::<Result<_, _>>()?;
    let rows = ks_rows(lad_a, &edges, &xs, &ys, alpha)?;

    // split-half baseline within the deeper sample: replicas are
    // independent, so both halves draw from the same law
    let half = deep.len() / 2;
    let ys_lo: Vec<Vec<f64>> = ys.iter().map(|v| v[..half].to_vec()).collect();
    let ys_hi: Vec<Vec<f64>> = ys.iter().map(|v| v[half..].to_vec()).collect();
    let baseline = ks_rows(lad_a, &edges, &ys_lo, &ys_hi, alpha)?;

    let mut verdicts = Vec::new();
    let worst = rows
        .iter()
        .max_by(|x, y| (x.ks / x.critical).total_cmp(&(y.ks / y.critical)))
        .unwrap();
    verdicts.push(Verdict::new(
        "AC10",
        rows.iter().all(|r| r.pass),
        format!(
            "{} shared edges at level <= {max_level}: worst KS {:.4} vs critical {:.4} \
             (edge {}, level {})",
            rows.len(),
            worst.ks,
            worst.critical,
            worst.edge,
            worst.level
        ),
    ));
    verdicts.push(Verdict::new(
        "AC10",
        baseline.iter().all(|r| r.pass),
        "split-half baseline distances below the critical value".to_string(),
    ));
    Ok(FiniteVolumeReport {
        alpha,
        max_level,
        rows,
        baseline,
        verdicts,
    })
}

/// Samples environments at each depth with independent stage seeds and
/// compares every shallower depth against the deepest.
#[allow(clippy::too_many_arguments)]
pub fn finite_volume_experiment(
    tree: &FiniteTree,
    depths: &[u32],
    a: &BigRational,
    horizon: u64,
    replicas: usize,
    master_seed: u64,
    max_level: u32,
    alpha: f64,
) -> Result<Vec<FiniteVolumeReport>, HarnessError> {
    if depths.len() < 2 {
        return Err(HarnessError::TooFew {
            what: "depths",
            need: 2,
            got: depths.len(),
        });
    }
    let mut depths: Vec<u32> = depths.to_vec();
    depths.sort_unstable();
    depths.dedup();
    let sample_at = |depth: u32| -> Result<EnvironmentSample, HarnessError> {
        let ladder = Arc::new(Ladder::with_defaults(
            tree.clone(),
            Depth::Finite(depth),
        )?);
        let stage = seed::stage_seed(master_seed, &format!("depth-{depth}"));
        Ok(sample_environments(ladder, a, horizon, replicas, stage)?)
    };
    let deepest = sample_at(*depths.last().unwrap())?;
    depths[..depths.len() - 1]
        .iter()
        .map(|&d| compare_samples(&sample_at(d)?, &deepest, max_level, alpha))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::report;

    #[test]
    fn marginals_stable_across_depths() {
        let tree = FiniteTree::segment(2).unwrap();
        let a = BigRational::from_integer(1.into());
        let reports =
            finite_volume_experiment(&tree, &[3, 5], &a, 100_000, 300, 0xF_101, 1, 0.05)
                .unwrap();
        assert_eq!(reports.len(), 1);
        let rep = &reports[0];
        // levels 0 and 1 contribute two rungs and four horizontals
        assert_eq!(rep.rows.len(), 6);
        // the reference rung is identically one in both samples
        let ref_row = rep.rows.iter().find(|r| r.edge == 0).unwrap();
        assert_eq!(ref_row.ks, 0.0);
        assert!(
            report::all_passed(&rep.verdicts),
            "{}",
            report::render(&rep.verdicts)
        );
    }

    #[test]
    fn needs_two_depths() {
        let tree = FiniteTree::segment(2).unwrap();
        let a = BigRational::from_integer(1.into());
        assert!(matches!(
            finite_volume_experiment(&tree, &[4], &a, 1000, 10, 1, 1, 0.05),
            Err(HarnessError::TooFew { .. })
        ));
    }
}
