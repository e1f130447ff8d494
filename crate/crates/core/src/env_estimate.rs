//! Empirical random environments extracted from long reinforced runs.
//!
//! The fraction of time each edge has been crossed by time `T` converges
//! almost surely, and the law of the limit is exactly the mixing measure of
//! the walk's random-environment representation.  Sampling many independent
//! replicas of `k_T(e) / T` therefore gives a Monte Carlo sample from that
//! measure, up to the `O(1/T)` transient.
//!
//! Replicas that never cross the reference edge cannot be renormalized to
//! it; they are discarded and counted.

use crate::ladder::{Depth, EdgeId, Ladder, LadderDescription};
use crate::ratio::{rational_to_f64, rational_to_string};
use crate::rwre::{EnvError, Environment, Normalization};
use crate::seed::{derive_replica_seed, replica_rng, stage_seed};
use crate::stats::{self, Ci, FitResult};
use crate::walk::{path_probability_exact, EdgeCounts, PathRecord, ReinforcementState, SimError};
use num::rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("environment error: {0}")]
    Env(#[from] EnvError),
    #[error("graph error: {0}")]
    Graph(#[from] crate::ladder::GraphError),
    #[error("stats error: {0}")]
    Stats(#[from] stats::StatsError),
    #[error("all {0} replicas were discarded (reference edge never crossed)")]
    AllDiscarded(usize),
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("sample is empty")]
    Empty,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("sample file {file} is inconsistent: {reason}")]
    Corrupt { file: String, reason: String },
}

/// Provenance of an environment sample, echoed into `meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleMeta {
    pub ladder: LadderDescription,
    /// Initial weight as an exact rational string.
    pub a: String,
    /// Steps per replica.
    pub horizon: u64,
    pub requested: usize,
    pub kept: usize,
    pub discarded: usize,
    pub master_seed: u64,
    /// Seed of every kept replica, in replica order.
    pub seeds: Vec<u64>,
    pub rng_family: String,
    pub seed_derivation: String,
}

/// Simplex-normalized occupation-fraction environments from independent
/// replicas, with coverage diagnostics.
pub struct EnvironmentSample {
    pub meta: SampleMeta,
    pub environments: Vec<Environment>,
    /// Per kept replica: number of edges never crossed.
    pub zero_edges: Vec<usize>,
}

impl EnvironmentSample {
    pub fn len(&self) -> usize {
        self.environments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.environments.is_empty()
    }
}

/// Crossing fractions `k(e) / total` as a simplex environment.  `counts` is
/// indexed by raw edge id and may be shorter than the edge list.
pub fn occupation_fractions(
    ladder: Arc<Ladder>,
    counts: &[u64],
) -> Result<Environment, SampleError> {
    let ne = ladder.edge_count()?;
    let total: u64 = counts.iter().take(ne).sum();
    if total == 0 {
        return Err(SampleError::ZeroHorizon);
    }
    let weights: Vec<f64> = (0..ne)
        .map(|e| counts.get(e).copied().unwrap_or(0) as f64 / total as f64)
        .collect();
    Ok(Environment::new(ladder, weights, Normalization::Simplex)?)
}

/// Runs `replicas` independent reinforced walks of `horizon` steps from the
/// start vertex and turns each into its occupation-fraction environment.
/// Replica `i` uses the derived seed for `(master_seed, i)`; results do not
/// depend on thread count.
pub fn sample_environments(
    ladder: Arc<Ladder>,
    a: &BigRational,
    horizon: u64,
    replicas: usize,
    master_seed: u64,
) -> Result<EnvironmentSample, SampleError> {
    if horizon == 0 {
        return Err(SampleError::ZeroHorizon);
    }
    let ne = ladder.edge_count()?;
    let a_f = rational_to_f64(a);
    let reference = ladder.reference_edge();

    let raw: Vec<Result<Option<(Vec<u64>, usize)>, SimError>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(master_seed, i as u64);
            let mut state = ReinforcementState::new(ladder.clone(), a_f)?;
            for _ in 0..horizon {
                state.step(&mut rng);
            }
            let counts = state.counts_dense();
            if counts.get(reference.0).copied().unwrap_or(0) == 0 {
                return Ok(None);
            }
            let zero = (0..ne)
                .filter(|&e| counts.get(e).copied().unwrap_or(0) == 0)
                .count();
            Ok(Some((counts[..ne.min(counts.len())].to_vec(), zero)))
        })
        .collect();

    let mut environments = Vec::new();
    let mut zero_edges = Vec::new();
    let mut seeds = Vec::new();
    let mut discarded = 0usize;
    for (i, item) in raw.into_iter().enumerate() {
        match item? {
            None => discarded += 1,
            Some((counts, zero)) => {
                environments.push(occupation_fractions(ladder.clone(), &counts)?);
                zero_edges.push(zero);
                seeds.push(derive_replica_seed(master_seed, i as u64));
            }
        }
    }
    if environments.is_empty() {
        return Err(SampleError::AllDiscarded(replicas));
    }
    let kept = environments.len();
    Ok(EnvironmentSample {
        meta: SampleMeta {
            ladder: ladder.describe(),
            a: rational_to_string(a),
            horizon,
            requested: replicas,
            kept,
            discarded,
            master_seed,
            seeds,
            rng_family: crate::seed::RNG_FAMILY.to_string(),
            seed_derivation: crate::seed::SEED_DERIVATION.to_string(),
        },
        environments,
        zero_edges,
    })
}

/// Occupation-fraction snapshots of the same replica at several horizons
/// (one continued run per replica).  Outer index: replica; inner:
/// checkpoint.  Snapshots with no crossings yet are skipped, so horizons
/// must be at least one.
pub fn sample_environment_checkpoints(
    ladder: Arc<Ladder>,
    a: &BigRational,
    horizons: &[u64],
    replicas: usize,
    master_seed: u64,
) -> Result<Vec<Vec<Environment>>, SampleError> {
    if horizons.is_empty() || horizons[0] == 0 {
        return Err(SampleError::ZeroHorizon);
    }
    let a_f = rational_to_f64(a);
    let ne = ladder.edge_count()?;
    let raw: Vec<Result<Vec<Vec<u64>>, SimError>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(master_seed, i as u64);
            let mut state = ReinforcementState::new(ladder.clone(), a_f)?;
            let mut snaps = Vec::with_capacity(horizons.len());
            for &h in horizons {
                while state.time() < h {
                    state.step(&mut rng);
                }
                let counts = state.counts_dense();
                snaps.push(counts[..ne.min(counts.len())].to_vec());
            }
            Ok(snaps)
        })
        .collect();
    raw.into_iter()
        .map(|snaps| {
            snaps?
                .into_iter()
                .map(|counts| occupation_fractions(ladder.clone(), &counts))
                .collect()
        })
        .collect()
}

/// Per-level spread of reference-normalized weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: u32,
    /// Values pooled over replicas and edges at this level.
    pub n: usize,
    pub n_positive: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Spatial decay of the random environment away from the reference edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayProfile {
    pub levels: Vec<LevelSummary>,
    /// Least squares of `ln median` on level over usable levels.
    pub fit: FitResult,
    /// Fitted decay rate (negated slope).
    pub c4_hat: f64,
    /// Bootstrap percentile interval for the rate (resampling replicas).
    pub c4_ci: Ci,
    /// Per level: fraction of values exceeding `exp(-c4_hat/2 * level)`.
    pub exceedance: Vec<ExceedanceRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExceedanceRow {
    pub level: u32,
    pub threshold: f64,
    pub exceeding: u64,
    pub n: u64,
    pub freq: f64,
}

fn median_via_select(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0);
    let mid = n / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *m;
    if n % 2 == 1 {
        hi
    } else {
        let lo = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

fn fit_levels(
    pooled: &[Vec<f64>],
    min_positive: usize,
) -> Result<(FitResult, f64), stats::StatsError> {
    let mut points = Vec::new();
    for (level, values) in pooled.iter().enumerate() {
        if values.is_empty() {
            continue;
        }
        let n_positive = values.iter().filter(|&&v| v > 0.0).count();
        let mut copy = values.clone();
        let median = median_via_select(&mut copy);
        if n_positive >= min_positive && median > 0.0 {
            points.push((level as f64, median.ln()));
        }
    }
    let fit = stats::least_squares(&points)?;
    let rate = -fit.slope;
    Ok((fit, rate))
}

/// Summarizes how the reference-normalized environment decays with level,
/// fits the decay rate, bootstraps its confidence interval by resampling
/// replicas, and tabulates exceedances of the half-rate envelope.
pub fn decay_profile(
    sample: &EnvironmentSample,
    min_positive: usize,
    bootstrap: usize,
    seed: u64,
) -> Result<DecayProfile, SampleError> {
    if sample.is_empty() {
        return Err(SampleError::Empty);
    }
    let ladder = sample.environments[0].ladder().clone();
    let Depth::Finite(depth) = ladder.depth() else {
        return Err(SampleError::Env(EnvError::NotFinite));
    };
    let ne = ladder.edge_count()?;
    let n_levels = depth as usize + 1;

    // values_by[replica][level] lists that replica's reference-normalized
    // weights at the level
    let mut values_by: Vec<Vec<Vec<f64>>> = Vec::with_capacity(sample.len());
    for env in &sample.environments {
        let reference = env.to_reference()?;
        let mut rows = vec![Vec::new(); n_levels];
        for e in 0..ne {
            let level = ladder.level_of_edge(EdgeId(e))? as usize;
            rows[level].push(reference.weight(EdgeId(e)));
        }
        values_by.push(rows);
    }

    let pool = |idx: &[usize]| -> Vec<Vec<f64>> {
        let mut pooled = vec![Vec::new(); n_levels];
        for &i in idx {
            for (level, vals) in values_by[i].iter().enumerate() {
                pooled[level].extend_from_slice(vals);
            }
        }
        pooled
    };

    let all_idx: Vec<usize> = (0..sample.len()).collect();
    let pooled = pool(&all_idx);
    let mut levels = Vec::with_capacity(n_levels);
    for (level, values) in pooled.iter().enumerate() {
        if values.is_empty() {
            continue;
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        levels.push(LevelSummary {
            level: level as u32,
            n: sorted.len(),
            n_positive: sorted.iter().filter(|&&v| v > 0.0).count(),
            q25: stats::quantile(&sorted, 0.25)?,
            median: stats::quantile(&sorted, 0.5)?,
            q75: stats::quantile(&sorted, 0.75)?,
        });
    }

    let (fit, c4_hat) = fit_levels(&pooled, min_positive)?;

    // percentile bootstrap over replicas
    let mut rates = Vec::with_capacity(bootstrap);
    for b in 0..bootstrap {
        use rand::Rng;
        let mut rng = replica_rng(stage_seed(seed, "decay-bootstrap"), b as u64);
        let idx: Vec<usize> = (0..sample.len())
            .map(|_| rng.gen_range(0..sample.len()))
            .collect();
        if let Ok((_, rate)) = fit_levels(&pool(&idx), min_positive) {
            rates.push(rate);
        }
    }
    if rates.len() < bootstrap / 2 {
        return Err(SampleError::Corrupt {
            file: "<bootstrap>".into(),
            reason: format!("only {} of {bootstrap} resamples admitted a fit", rates.len()),
        });
    }
    rates.sort_by(f64::total_cmp);
    let c4_ci = Ci {
        lo: stats::quantile(&rates, 0.025)?,
        hi: stats::quantile(&rates, 0.975)?,
    };

    let mut exceedance = Vec::new();
    for row in &levels {
        let threshold = (-c4_hat / 2.0 * row.level as f64).exp();
        let exceeding = pooled[row.level as usize]
            .iter()
            .filter(|&&v| v > threshold)
            .count() as u64;
        let n = row.n as u64;
        exceedance.push(ExceedanceRow {
            level: row.level,
            threshold,
            exceeding,
            n,
            freq: exceeding as f64 / n as f64,
        });
    }

    Ok(DecayProfile {
        levels,
        fit,
        c4_hat,
        c4_ci,
        exceedance,
    })
}

/// Tail of `|ln(x_e / x_f)|` over the sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRatioTail {
    pub edge: usize,
    pub other: usize,
    /// Replicas where both edges have positive weight.
    pub contributing: u64,
    pub thresholds: Vec<f64>,
    pub exceeding: Vec<u64>,
    pub survival: Vec<f64>,
    pub cis: Vec<Ci>,
    /// Least squares of `ln survival count` on the threshold, over
    /// thresholds with at least `min_count` exceedances.
    pub fit: Option<FitResult>,
}

/// Survival curve of the absolute log weight ratio of two edges.
pub fn log_ratio_tail(
    sample: &EnvironmentSample,
    edge: EdgeId,
    other: EdgeId,
    thresholds: &[f64],
    min_count: u64,
) -> Result<LogRatioTail, SampleError> {
    if sample.is_empty() {
        return Err(SampleError::Empty);
    }
    let mut ratios = Vec::with_capacity(sample.len());
    for env in &sample.environments {
        let a = env.weight(edge);
        let b = env.weight(other);
        if a > 0.0 && b > 0.0 {
            ratios.push((a / b).ln().abs());
        }
    }
    let contributing = ratios.len() as u64;
    if contributing == 0 {
        return Err(SampleError::Empty);
    }
    let mut exceeding = Vec::with_capacity(thresholds.len());
    let mut survival = Vec::with_capacity(thresholds.len());
    let mut cis = Vec::with_capacity(thresholds.len());
    for &m in thresholds {
        let k = ratios.iter().filter(|&&z| z >= m).count() as u64;
        exceeding.push(k);
        survival.push(k as f64 / contributing as f64);
        cis.push(stats::wilson_ci(k, contributing)?);
    }
    let bins: Vec<(f64, u64)> = thresholds
        .iter()
        .copied()
        .zip(exceeding.iter().copied())
        .collect();
    let fit = stats::loglinear_fit(&bins, min_count).ok();
    Ok(LogRatioTail {
        edge: edge.0,
        other: other.0,
        contributing,
        thresholds: thresholds.to_vec(),
        exceeding,
        survival,
        cis,
        fit,
    })
}

/// Importance weights tilting the sample toward environments consistent
/// with an observed prefix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReweightDiagnostics {
    /// Exact path probability of the prefix under the reinforced law.
    pub prefix_probability: f64,
    /// Mean unnormalized weight; the mixture identity makes this one in
    /// expectation.
    pub mean_weight: f64,
    /// Standard error of the mean weight.
    pub mean_weight_se: f64,
    pub zero_weight_count: usize,
}

/// For each environment, the ratio of its quenched prefix probability to
/// the reinforced prefix probability.  Averaging any quenched statistic
/// with these weights estimates its conditional mixture mean given the
/// prefix.
pub fn conditional_reweight(
    sample: &EnvironmentSample,
    a: &BigRational,
    prefix: &PathRecord,
) -> Result<(Vec<f64>, ReweightDiagnostics), SampleError> {
    if sample.is_empty() {
        return Err(SampleError::Empty);
    }
    let ladder = sample.environments[0].ladder();
    let p_exact = rational_to_f64(&path_probability_exact(
        ladder,
        a,
        prefix,
        &EdgeCounts::default(),
    )?);
    let mut weights = Vec::with_capacity(sample.len());
    for env in &sample.environments {
        let q = env.cylinder_probability(prefix)?;
        weights.push(q / p_exact);
    }
    let (mean, sd) = stats::mean_sd(&weights)?;
    let diagnostics = ReweightDiagnostics {
        prefix_probability: p_exact,
        mean_weight: mean,
        mean_weight_se: sd / (weights.len() as f64).sqrt(),
        zero_weight_count: weights.iter().filter(|&&w| w == 0.0).count(),
    };
    Ok((weights, diagnostics))
}

#[derive(Serialize, Deserialize)]
struct EnvRecord {
    index: usize,
    seed: u64,
    zero_edges: usize,
    weights: Vec<f64>,
}

/// Writes `meta.json` and `environments.jsonl` into `dir`.
pub fn save_sample(sample: &EnvironmentSample, dir: &Path) -> Result<(), SampleError> {
    std::fs::create_dir_all(dir)?;
    let meta = serde_json::to_string_pretty(&sample.meta)?;
    std::fs::write(dir.join("meta.json"), meta)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("environments.jsonl"))?);
    for (i, env) in sample.environments.iter().enumerate() {
        let record = EnvRecord {
            index: i,
            seed: sample.meta.seeds[i],
            zero_edges: sample.zero_edges[i],
            weights: env.weights().to_vec(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a sample saved by `save_sample`.
pub fn load_sample(dir: &Path) -> Result<EnvironmentSample, SampleError> {
    let meta_path = dir.join("meta.json");
    let meta: SampleMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
    let descriptor = crate::ladder::LadderDescriptor {
        tree: Some(crate::ladder::TreeSpec {
            vertices: meta.ladder.tree_vertices.clone(),
            edges: meta.ladder.tree_edges.clone(),
        }),
        depth: serde_json::from_value(meta.ladder.depth.clone())?,
        v_start: Some(meta.ladder.v_start),
        reference_rung: Some(meta.ladder.reference_rung),
        ..Default::default()
    };
    let ladder = Arc::new(descriptor.build(None)?);
    let env_path = dir.join("environments.jsonl");
    let file = std::fs::File::open(&env_path)?;
    let mut environments = Vec::new();
    let mut zero_edges = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EnvRecord = serde_json::from_str(&line)?;
        if record.index != environments.len() {
            return Err(SampleError::Corrupt {
                file: env_path.display().to_string(),
                reason: format!("line {}: index {} out of order", lineno + 1, record.index),
            });
        }
        environments.push(Environment::new(
            ladder.clone(),
            record.weights,
            Normalization::Simplex,
        )?);
        zero_edges.push(record.zero_edges);
    }
    if environments.len() != meta.kept {
        return Err(SampleError::Corrupt {
            file: env_path.display().to_string(),
            reason: format!(
                "meta says {} environments, file has {}",
                meta.kept,
                environments.len()
            ),
        });
    }
    Ok(EnvironmentSample {
        meta,
        environments,
        zero_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::{FiniteTree, VertexId};
    use crate::ratio::parse_rational;
    use approx::assert_relative_eq;

    fn ladder(depth: u32) -> Arc<Ladder> {
        let tree = FiniteTree::segment(2).unwrap();
        Arc::new(Ladder::with_defaults(tree, Depth::Finite(depth)).unwrap())
    }

    #[test]
    fn occupation_fractions_sum_to_one_and_match_counts() {
        let l = ladder(2);
        // counts: edge ids 0..7 on depth-2 segment-2 ladder (3 rungs + 4
        // horizontals, contiguous ids)
        assert_eq!(l.edge_count().unwrap(), 7);
        let counts = vec![4u64, 2, 0, 1, 0, 1, 0];
        let env = occupation_fractions(l, &counts).unwrap();
        assert_relative_eq!(env.weights().iter().sum::<f64>(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(env.weight(EdgeId(0)), 0.5, max_relative = 1e-15);
        assert_relative_eq!(env.weight(EdgeId(3)), 0.125, max_relative = 1e-15);
        assert_eq!(env.weight(EdgeId(6)), 0.0);
    }

    #[test]
    fn sampling_is_deterministic_and_records_seeds() {
        let l = ladder(3);
        let a = parse_rational("2").unwrap();
        let s1 = sample_environments(l.clone(), &a, 2_000, 20, 99).unwrap();
        let s2 = sample_environments(l.clone(), &a, 2_000, 20, 99).unwrap();
        assert_eq!(s1.meta.kept + s1.meta.discarded, 20);
        assert_eq!(s1.meta.seeds.len(), s1.environments.len());
        for (a_env, b_env) in s1.environments.iter().zip(&s2.environments) {
            assert_eq!(a_env.weights(), b_env.weights());
        }
        assert_eq!(s1.meta.seeds, s2.meta.seeds);
        assert_eq!(s1.meta.a, "2");
        // a different master seed gives different environments
        let s3 = sample_environments(l, &a, 2_000, 20, 100).unwrap();
        assert_ne!(s1.environments[0].weights(), s3.environments[0].weights());
    }

    #[test]
    fn checkpoints_stabilize_as_horizon_grows() {
        let l = ladder(4);
        let a = parse_rational("2").unwrap();
        let horizons = [1_000u64, 10_000, 100_000];
        let snaps = sample_environment_checkpoints(l, &a, &horizons, 12, 7).unwrap();
        assert_eq!(snaps.len(), 12);
        // mean l1 distance between successive checkpoints decreases
        let mut deltas = Vec::new();
        for pair in [(0usize, 1usize), (1, 2)] {
            let mut total = 0.0;
            for replica in &snaps {
                let (x, y) = (&replica[pair.0], &replica[pair.1]);
                total += x
                    .weights()
                    .iter()
                    .zip(y.weights())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
            }
            deltas.push(total / snaps.len() as f64);
        }
        assert!(
            deltas[1] < deltas[0],
            "occupation fractions failed to stabilize: {deltas:?}"
        );
    }

    #[test]
    fn decay_profile_on_synthetic_exponential_sample() {
        // hand-built sample: exact exponential decay with rate ln 4 per
        // level must be recovered with rate ~ ln 4 and R^2 ~ 1
        let l = ladder(6);
        let ne = l.edge_count().unwrap();
        let mut environments = Vec::new();
        for jitter in 0..40 {
            let scale = 1.0 + jitter as f64 * 1e-3;
            let mut w: Vec<f64> = (0..ne)
                .map(|e| {
                    let level = l.level_of_edge(EdgeId(e)).unwrap();
                    scale * 0.25f64.powi(level as i32)
                })
                .collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= sum);
            environments.push(Environment::new(l.clone(), w, Normalization::Simplex).unwrap());
        }
        let n = environments.len();
        let sample = EnvironmentSample {
            meta: SampleMeta {
                ladder: l.describe(),
                a: "1".into(),
                horizon: 1,
                requested: n,
                kept: n,
                discarded: 0,
                master_seed: 0,
                seeds: vec![0; n],
                rng_family: crate::seed::RNG_FAMILY.into(),
                seed_derivation: crate::seed::SEED_DERIVATION.into(),
            },
            environments,
            zero_edges: vec![0; n],
        };
        let profile = decay_profile(&sample, 30, 50, 5).unwrap();
        assert_relative_eq!(profile.c4_hat, 4.0f64.ln(), max_relative = 1e-6);
        assert!(profile.fit.r_squared > 0.999999);
        assert!(profile.c4_ci.contains(profile.c4_hat));
        // every level-0 row includes the reference edge at exactly 1
        let lvl0 = &profile.levels[0];
        assert_eq!(lvl0.level, 0);
        assert!(lvl0.n_positive == lvl0.n);
        // the half-rate envelope is exceeded at level 0 only by weights
        // above 1; the reference itself sits exactly at the threshold
        assert_eq!(profile.exceedance[0].threshold, 1.0);
    }

    #[test]
    fn log_ratio_tail_counts_and_fit() {
        let l = ladder(2);
        let ne = l.edge_count().unwrap();
        // synthetic environments with log ratio exactly k/10 at replica k
        let mut environments = Vec::new();
        for k in 0..200 {
            let r = ((k % 40) as f64 / 10.0).exp();
            let mut w = vec![1.0; ne];
            w[0] = r;
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= sum);
            environments.push(Environment::new(l.clone(), w, Normalization::Simplex).unwrap());
        }
        let n = environments.len();
        let sample = EnvironmentSample {
            meta: SampleMeta {
                ladder: l.describe(),
                a: "1".into(),
                horizon: 1,
                requested: n,
                kept: n,
                discarded: 0,
                master_seed: 0,
                seeds: vec![0; n],
                rng_family: crate::seed::RNG_FAMILY.into(),
                seed_derivation: crate::seed::SEED_DERIVATION.into(),
            },
            environments,
            zero_edges: vec![0; n],
        };
        // thresholds off the value grid, so float roundtrip in ln(exp(.))
        // cannot flip a boundary comparison
        let thresholds = [0.55, 1.05, 2.05, 3.05];
        let tail = log_ratio_tail(&sample, EdgeId(0), EdgeId(1), &thresholds, 5).unwrap();
        assert_eq!(tail.contributing, 200);
        // |ln ratio| = (k mod 40)/10, uniform over {0, .1, ..., 3.9}, each
        // value appearing 5 times
        assert_eq!(tail.exceeding, vec![170, 145, 95, 45]);
        assert_relative_eq!(tail.survival[2], 95.0 / 200.0, max_relative = 1e-12);
        let fit = tail.fit.expect("all bins have counts >= 5");
        assert!(fit.slope < 0.0);
        for (ci, s) in tail.cis.iter().zip(&tail.survival) {
            assert!(ci.contains(*s));
        }
    }

    #[test]
    fn conditional_reweight_mean_is_near_one() {
        let l = ladder(1);
        let a = parse_rational("1").unwrap();
        let sample = sample_environments(l.clone(), &a, 50_000, 60, 4242).unwrap();
        let prefix = PathRecord::new(vec![l.start(), VertexId(1)]);
        let (weights, diag) = conditional_reweight(&sample, &a, &prefix).unwrap();
        assert_eq!(weights.len(), sample.len());
        assert_relative_eq!(diag.prefix_probability, 0.5, max_relative = 1e-12);
        assert!(
            (diag.mean_weight - 1.0).abs() <= 4.0 * diag.mean_weight_se.max(1e-3),
            "mean weight {} (se {})",
            diag.mean_weight,
            diag.mean_weight_se
        );
        assert_eq!(diag.zero_weight_count, 0);
    }

    #[test]
    fn save_load_roundtrip() {
        let l = ladder(2);
        let a = parse_rational("3/4").unwrap();
        let sample = sample_environments(l, &a, 1_000, 10, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_sample(&sample, dir.path()).unwrap();
        let loaded = load_sample(dir.path()).unwrap();
        assert_eq!(loaded.meta.a, "3/4");
        assert_eq!(loaded.meta.kept, sample.meta.kept);
        assert_eq!(loaded.meta.seeds, sample.meta.seeds);
        assert_eq!(loaded.zero_edges, sample.zero_edges);
        for (x, y) in sample.environments.iter().zip(&loaded.environments) {
            assert_eq!(x.weights(), y.weights());
        }
        // corrupt index ordering is refused
        let env_path = dir.path().join("environments.jsonl");
        let text = std::fs::read_to_string(&env_path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(0, 1);
        std::fs::write(&env_path, lines.join("\n")).unwrap();
        assert!(matches!(
            load_sample(dir.path()),
            Err(SampleError::Corrupt { .. })
        ));
    }

    #[test]
    fn discards_are_possible_and_counted() {
        // with a tiny initial weight and a one-step horizon, the walk often
        // takes the horizontal first and never crosses the reference rung
        let l = ladder(1);
        let a = parse_rational("1").unwrap();
        let sample = sample_environments(l, &a, 1, 200, 17).unwrap();
        assert!(sample.meta.discarded > 50);
        assert!(sample.meta.kept > 50);
        assert_eq!(sample.meta.kept + sample.meta.discarded, 200);
        // kept replicas all crossed the reference edge: weight 1 there
        for env in &sample.environments {
            assert_eq!(env.weight(EdgeId(0)), 1.0);
        }
    }
}
