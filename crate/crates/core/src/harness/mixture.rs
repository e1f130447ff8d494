//! Mixture representation checks: exact reinforced-walk path probabilities
//! against environment averages of quenched probabilities, conditional
//! versions under prefix reweighting, and annealed consistency of the
//! equilibrium law and of short process cylinders.

use super::HarnessError;
use crate::env_estimate::{conditional_reweight, EnvironmentSample, ReweightDiagnostics};
use crate::harness::equilibrium::EmpiricalLaw;
use crate::harness::report::Verdict;
use crate::ladder::{Ladder, Parity, VertexId};
use crate::ratio::{rational_to_f64, rational_to_string};
use crate::seed;
use crate::stats::{bootstrap_se, corrected_z, mean_sd, tv_distance};
use crate::walk::{crossing_counts, path_probability_exact, EdgeCounts, PathRecord};
use num::BigRational;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// All walks from `from` of length `1..=max_len`, in lexicographic order of
/// the edge choices.
pub fn enumerate_paths(
    ladder: &Ladder,
    from: VertexId,
    max_len: usize,
) -> Result<Vec<PathRecord>, HarnessError> {
    let mut out = Vec::new();
    let mut current = vec![from];
    fn extend(
        ladder: &Ladder,
        current: &mut Vec<VertexId>,
        max_len: usize,
        out: &mut Vec<PathRecord>,
    ) -> Result<(), HarnessError> {
        if current.len() > max_len {
            return Ok(());
        }
        for (_, next) in ladder.incident_edges(*current.last().unwrap())? {
            current.push(next);
            out.push(PathRecord::new(current.clone()));
            extend(ladder, current, max_len, out)?;
            current.pop();
        }
        Ok(())
    }
    extend(ladder, &mut current, max_len, &mut out)?;
    out.sort_by_key(|p| p.vertices.len());
    Ok(out)
}

pub const BOOTSTRAP_RESAMPLES: usize = 400;
pub const BASE_Z: f64 = 4.0;
/// Occupation fractions at horizon `T` carry `O(1/T)` bias; the band adds
/// this multiple of `1/T`.
pub const BIAS_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureRow {
    /// Raw vertex ids of the path, including the start.
    pub path: Vec<usize>,
    pub len: usize,
    pub exact: f64,
    pub exact_rational: String,
    pub estimate: f64,
    pub se: f64,
    pub band: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureReport {
    pub rows: Vec<MixtureRow>,
    /// `z` after multiple-testing correction across the rows.
    pub corrected_z: f64,
    pub bias_budget: f64,
    pub bootstrap_resamples: usize,
    pub verdicts: Vec<Verdict>,
}

/// Exact `P(pi)` against the environment mean of the quenched `Q(pi)` for
/// every path from the start of length at most `max_len`.
pub fn mixture_check(
    sample: &EnvironmentSample,
    a: &BigRational,
    max_len: usize,
) -> Result<MixtureReport, HarnessError> {
    if sample.is_empty() {
        return Err(HarnessError::TooFew {
            what: "environments",
            need: 1,
            got: 0,
        });
    }
    let ladder = Arc::clone(sample.environments[0].ladder());
    let paths = enumerate_paths(&ladder, ladder.start(), max_len)?;
    let z = corrected_z(BASE_Z, paths.len())?;
    let bias = BIAS_MULTIPLE / sample.meta.horizon as f64;
    let boot_seed = seed::stage_seed(sample.meta.master_seed, "mixture-bootstrap");

    let mut rows = Vec::with_capacity(paths.len());
    for path in &paths {
        let exact_q = path_probability_exact(&ladder, a, path, &EdgeCounts::default())?;
        let exact = rational_to_f64(&exact_q);
        let quenched: Vec<f64> = sample
            .environments
            .iter()
            .map(|env| env.cylinder_probability(path))
            .collect::<Result<_, _>>()?;
        let estimate = quenched.iter().sum::<f64>() / quenched.len() as f64;
        let (_, se) = bootstrap_se(quenched.len(), BOOTSTRAP_RESAMPLES, boot_seed, |idx| {
            idx.iter().map(|&i| quenched[i]).sum::<f64>() / idx.len() as f64
        })?;
        let band = z * se + bias;
        rows.push(MixtureRow {
            path: path.vertices.iter().map(|v| v.0).collect(),
            len: path.steps(),
            exact,
            exact_rational: rational_to_string(&exact_q),
            estimate,
            se,
            band,
            pass: (exact - estimate).abs() <= band,
        });
    }
    let worst = rows
        .iter()
        .max_by(|x, y| {
            ((x.exact - x.estimate).abs() - x.band)
                .total_cmp(&((y.exact - y.estimate).abs() - y.band))
        })
        .unwrap();
    let verdicts = vec![Verdict::new(
        "AC4",
        rows.iter().all(|r| r.pass),
        format!(
            "{} paths of length <= {max_len}: worst |exact - mean quenched| {:.2e} \
             vs band {:.2e} (z {:.2}, bias {:.1e})",
            rows.len(),
            (worst.exact - worst.estimate).abs(),
            worst.band,
            z,
            bias
        ),
    )];
    Ok(MixtureReport {
        rows,
        corrected_z: z,
        bias_budget: bias,
        bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        verdicts,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalRow {
    pub continuation: Vec<usize>,
    pub len: usize,
    pub exact: f64,
    pub exact_rational: String,
    pub estimate: f64,
    pub se: f64,
    pub band: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalMixtureReport {
    pub prefix: Vec<usize>,
    pub mean_weight: f64,
    pub mean_weight_se: f64,
    pub weight_pass: bool,
    pub zero_weight_count: usize,
    pub rows: Vec<ConditionalRow>,
    pub verdicts: Vec<Verdict>,
}

/// Conditional law after an observed prefix: the exact restart computation
/// against the reweighted environment mixture.
pub fn conditional_mixture_check(
    sample: &EnvironmentSample,
    a: &BigRational,
    prefix: &PathRecord,
    max_len: usize,
) -> Result<ConditionalMixtureReport, HarnessError> {
    let ladder = Arc::clone(sample.environments[0].ladder());
    let (weights, diag): (Vec<f64>, ReweightDiagnostics) =
        conditional_reweight(sample, a, prefix)?;
    let resume = prefix.end().expect("prefix nonempty");
    let continuations = enumerate_paths(&ladder, resume, max_len)?;
    let initial = crossing_counts(&ladder, prefix)?;
    let boot_seed = seed::stage_seed(sample.meta.master_seed, "conditional-bootstrap");

    let mut rows = Vec::with_capacity(continuations.len());
    for rho in &continuations {
        let exact_q = path_probability_exact(&ladder, a, rho, &initial)?;
        let exact = rational_to_f64(&exact_q);
        let weighted: Vec<f64> = sample
            .environments
            .iter()
            .zip(&weights)
            .map(|(env, &w)| Ok(w * env.cylinder_probability(rho)?))
            .collect::<Result<_, HarnessError>>()?;
        let estimate = weighted.iter().sum::<f64>() / weighted.len() as f64;
        let (_, se) = bootstrap_se(weighted.len(), BOOTSTRAP_RESAMPLES, boot_seed, |idx| {
            idx.iter().map(|&i| weighted[i]).sum::<f64>() / idx.len() as f64
        })?;
        let band = BASE_Z * se;
        rows.push(ConditionalRow {
            continuation: rho.vertices.iter().map(|v| v.0).collect(),
            len: rho.steps(),
            exact,
            exact_rational: rational_to_string(&exact_q),
            estimate,
            se,
            band,
            pass: (exact - estimate).abs() <= band,
        });
    }
    let weight_pass = (diag.mean_weight - 1.0).abs() <= BASE_Z * diag.mean_weight_se;
    let verdicts = vec![
        Verdict::new(
            "AC5",
            rows.iter().all(|r| r.pass),
            format!(
                "{} continuations of length <= {max_len} within {BASE_Z} SE of the \
                 exact restart law",
                rows.len()
            ),
        ),
        Verdict::new(
            "AC5",
            weight_pass,
            format!(
                "mean reweighting factor {:.4} within {BASE_Z} SE ({:.4}) of 1",
                diag.mean_weight, diag.mean_weight_se
            ),
        ),
    ];
    Ok(ConditionalMixtureReport {
        prefix: prefix.vertices.iter().map(|v| v.0).collect(),
        mean_weight: diag.mean_weight,
        mean_weight_se: diag.mean_weight_se,
        weight_pass,
        zero_weight_count: diag.zero_weight_count,
        rows,
        verdicts,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealedEquilibriumRow {
    pub vertex: usize,
    pub walk_freq: f64,
    pub env_mean: f64,
    pub walk_se: f64,
    pub env_se: f64,
    pub band: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealedEquilibriumReport {
    pub rows: Vec<AnnealedEquilibriumRow>,
    pub tv: f64,
    pub corrected_z: f64,
    pub verdicts: Vec<Verdict>,
}

/// Annealed equilibrium: the walk's empirical even-time law against the
/// environment average of the even parity equilibrium.
pub fn annealed_equilibrium_check(
    sample: &EnvironmentSample,
    law: &EmpiricalLaw,
) -> Result<AnnealedEquilibriumReport, HarnessError> {
    let ladder = sample.environments[0].ladder();
    let nv = ladder.vertex_count()?;
    let r_env = sample.len() as f64;

    let mut mean = vec![0.0; nv];
    let mut sq = vec![0.0; nv];
    for env in &sample.environments {
        let eq = env.parity_equilibrium(Parity::Even)?;
        for (v, &p) in eq.probs().iter().enumerate() {
            mean[v] += p;
            sq[v] += p * p;
        }
    }
    for v in 0..nv {
        mean[v] /= r_env;
        sq[v] = ((sq[v] / r_env - mean[v] * mean[v]).max(0.0) / r_env).sqrt();
    }

    let mut walk = law.probs();
    walk.resize(nv, 0.0);
    let r_walk = law.replicas as f64;
    let bias = BIAS_MULTIPLE / sample.meta.horizon as f64;

    // compare where either side puts visible mass
    let floor = 0.5 / r_walk;
    let vertices: Vec<usize> = (0..nv)
        .filter(|&v| walk[v] > 0.0 || mean[v] > floor)
        .collect();
    let z = corrected_z(BASE_Z, vertices.len().max(1))?;
    let rows: Vec<AnnealedEquilibriumRow> = vertices
        .into_iter()
        .map(|v| {
            let walk_se = (walk[v] * (1.0 - walk[v]) / r_walk).sqrt();
            let band = z * (walk_se + sq[v]) + bias;
            AnnealedEquilibriumRow {
                vertex: v,
                walk_freq: walk[v],
                env_mean: mean[v],
                walk_se,
                env_se: sq[v],
                band,
                pass: (walk[v] - mean[v]).abs() <= band,
            }
        })
        .collect();
    let tv = tv_distance(&walk, &mean)?;
    let verdicts = vec![Verdict::new(
        "mixture.annealed-equilibrium",
        rows.iter().all(|r| r.pass),
        format!(
            "{} vertices: walk law vs environment mean equilibrium, TV {:.5}",
            rows.len(),
            tv
        ),
    )];
    Ok(AnnealedEquilibriumReport {
        rows,
        tv,
        corrected_z: z,
        verdicts,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealedProcessRow {
    pub cylinder: (u32, u32, u32),
    pub walk_freq: f64,
    pub env_mean: f64,
    pub band: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealedProcessReport {
    pub rows: Vec<AnnealedProcessRow>,
    pub corrected_z: f64,
    pub verdicts: Vec<Verdict>,
}

/// Annealed process law: empirical frequencies of three consecutive
/// positions at a large even time against the environment average of
/// `x_even(v0) Q(v0,v1) Q(v1,v2)`.
pub fn annealed_process_check(
    sample: &EnvironmentSample,
    triples: &[(u32, u32, u32, u64)],
    walk_replicas: u64,
) -> Result<AnnealedProcessReport, HarnessError> {
    let r_walk = walk_replicas as f64;
    let r_env = sample.len() as f64;
    let bias = BIAS_MULTIPLE / sample.meta.horizon as f64;

    let equilibria: Vec<_> = sample
        .environments
        .iter()
        .map(|env| env.parity_equilibrium(Parity::Even))
        .collect::<Result<Vec<_>, _>>()?;
    let cylinders: Vec<(u32, u32, u32)> = triples.iter().map(|t| (t.0, t.1, t.2)).collect();
    let z = corrected_z(BASE_Z, cylinders.len().max(1))?;
    let mut rows = Vec::with_capacity(cylinders.len());
    for (k, &(v0, v1, v2)) in cylinders.iter().enumerate() {
        let walk_freq = triples[k].3 as f64 / r_walk;
        let mut vals = Vec::with_capacity(sample.len());
        for (env, eq) in sample.environments.iter().zip(&equilibria) {
            let p = eq.prob(VertexId(v0 as usize))
                * env.transition_prob(VertexId(v0 as usize), VertexId(v1 as usize))?
                * env.transition_prob(VertexId(v1 as usize), VertexId(v2 as usize))?;
            vals.push(p);
        }
        let (env_mean, sd) = mean_sd(&vals)?;
        let env_se = sd / r_env.sqrt();
        let walk_se = (walk_freq * (1.0 - walk_freq) / r_walk).sqrt();
        let band = z * (walk_se + env_se) + bias;
        rows.push(AnnealedProcessRow {
            cylinder: (v0, v1, v2),
            walk_freq,
            env_mean,
            band,
            pass: (walk_freq - env_mean).abs() <= band,
        });
    }
    let verdicts = vec![Verdict::new(
        "mixture.annealed-process",
        rows.iter().all(|r| r.pass),
        format!(
            "{} three-step cylinders at stationarity within combined error",
            rows.len()
        ),
    )];
    Ok(AnnealedProcessReport {
        rows,
        corrected_z: z,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_estimate::sample_environments;
    use crate::harness::equilibrium::equilibrium_experiment;
    use crate::harness::report;
    use crate::ladder::{Depth, FiniteTree};

    fn square() -> Arc<Ladder> {
        Arc::new(
            Ladder::with_defaults(FiniteTree::segment(2).unwrap(), Depth::Finite(1)).unwrap(),
        )
    }

    #[test]
    fn path_enumeration_counts() {
        let ladder = square();
        let paths = enumerate_paths(&ladder, ladder.start(), 3).unwrap();
        // every square-ladder vertex has two neighbors: 2 + 4 + 8 paths
        assert_eq!(paths.len(), 14);
        assert_eq!(paths.iter().filter(|p| p.steps() == 1).count(), 2);
        assert_eq!(paths.iter().filter(|p| p.steps() == 3).count(), 8);
        for p in &paths {
            p.validate(&ladder).unwrap();
            assert_eq!(p.start().unwrap(), ladder.start());
        }
    }

    #[test]
    fn mixture_identity_on_the_square() {
        let ladder = square();
        let a = BigRational::from_integer(1.into());
        let sample = sample_environments(Arc::clone(&ladder), &a, 100_000, 400, 0xAC4_1).unwrap();
        let rep = mixture_check(&sample, &a, 2).unwrap();
        assert_eq!(rep.rows.len(), 6);
        // frozen exact values: single step 1/2, immediate return 1/3
        let one_step = &rep.rows[0];
        assert_eq!(one_step.exact_rational, "1/2");
        let back = rep
            .rows
            .iter()
            .find(|r| r.len == 2 && r.path[0] == r.path[2])
            .unwrap();
        assert_eq!(back.exact_rational, "1/3");
        assert!(
            report::all_passed(&rep.verdicts),
            "{}",
            report::render(&rep.verdicts)
        );
    }

    #[test]
    fn conditional_mixture_on_the_square() {
        let ladder = square();
        let a = BigRational::from_integer(1.into());
        let sample = sample_environments(Arc::clone(&ladder), &a, 100_000, 400, 0xAC5_1).unwrap();
        let prefix = PathRecord::new(vec![ladder.start(), VertexId(1)]);
        let rep = conditional_mixture_check(&sample, &a, &prefix, 1).unwrap();
        assert_eq!(rep.rows.len(), 2);
        // after (start, B) the edge weight is a+1 = 2 against a = 1: the
        // return step has restart probability 2/3
        let back = rep.rows.iter().find(|r| r.continuation[1] == 0).unwrap();
        assert_eq!(back.exact_rational, "2/3");
        assert!(rep.weight_pass, "mean weight {}", rep.mean_weight);
        assert!(
            report::all_passed(&rep.verdicts),
            "{}",
            report::render(&rep.verdicts)
        );
    }

    #[test]
    fn annealed_checks_on_the_square() {
        let ladder = square();
        let a = BigRational::from_integer(1.into());
        let sample = sample_environments(Arc::clone(&ladder), &a, 100_000, 500, 0xAEE1).unwrap();
        let eq = equilibrium_experiment(&ladder, &a, &[100, 400], 3000, 0xAEE2).unwrap();
        let rep = annealed_equilibrium_check(&sample, eq.even_laws.last().unwrap()).unwrap();
        assert!(!rep.rows.is_empty());
        assert!(
            report::all_passed(&rep.verdicts),
            "tv {} rows {:#?}",
            rep.tv,
            rep.rows
        );
        let proc = annealed_process_check(&sample, &eq.triples, 3000).unwrap();
        assert!(!proc.rows.is_empty());
        assert!(
            report::all_passed(&proc.verdicts),
            "{}",
            report::render(&proc.verdicts)
        );
        // walk frequencies over listed cylinders sum to one
        let total: f64 = proc.rows.iter().map(|r| r.walk_freq).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
