//! Parity-split empirical laws of the walker at even and odd times, their
//! stabilization in total variation, and the exponential envelope of the
//! limiting law.

use super::{positions_at, HarnessError, MIN_BIN_COUNT};
use crate::harness::report::Verdict;
use crate::ladder::{Ladder, Parity, VertexId};
use crate::seed;
use crate::stats::{loglinear_fit, tv_distance, FitResult};
use num::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    pub time: u64,
    pub replicas: u64,
    /// Occupation counts indexed by raw vertex id.
    pub counts: Vec<u64>,
}

impl EmpiricalLaw {
    fn from_positions(time: u64, positions: &[u32]) -> Self {
        let max = positions.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0u64; max as usize + 1];
        for &p in positions {
            counts[p as usize] += 1;
        }
        EmpiricalLaw {
            time,
            replicas: positions.len() as u64,
            counts,
        }
    }

    pub fn probs(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.replicas as f64)
            .collect()
    }

    /// Counts aggregated by the vertex's level.
    pub fn level_counts(&self, ladder: &Ladder) -> Vec<(f64, u64)> {
        let nv = ladder.tree().vertex_count();
        let mut per_level = BTreeMap::new();
        for (raw, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                *per_level.entry(raw / nv).or_insert(0u64) += c;
            }
        }
        per_level
            .into_iter()
            .map(|(l, c)| (l as f64, c))
            .collect()
    }

    fn tv(&self, other: &EmpiricalLaw) -> Result<f64, HarnessError> {
        let n = self.counts.len().max(other.counts.len());
        let pad = |law: &EmpiricalLaw| {
            let mut p = law.probs();
            p.resize(n, 0.0);
            p
        };
        Ok(tv_distance(&pad(self), &pad(other))?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// The probed `t`; laws are recorded at `2t` and `2t + 1`.
    pub checkpoints: Vec<u64>,
    pub even_laws: Vec<EmpiricalLaw>,
    pub odd_laws: Vec<EmpiricalLaw>,
    /// Successive `TV(law_{2t_j}, law_{2t_{j+1}})`.
    pub tv_even: Vec<f64>,
    pub tv_odd: Vec<f64>,
    /// Expected TV between two independent same-size samples of the final
    /// even law, estimated by bootstrap.
    pub noise_floor: f64,
    pub noise_floor_sd: f64,
    /// Laws at even times put zero mass on the odd class and vice versa.
    pub support_exact: bool,
    /// Log-linear fit of level mass of the final even law.
    pub envelope_fit: FitResult,
    /// `(v0, v1, v2, count)` at times `(2T, 2T+1, 2T+2)` for the final `T`.
    pub triples: Vec<(u32, u32, u32, u64)>,
    pub verdicts: Vec<Verdict>,
}

pub const NOISE_FLOOR_RESAMPLES: usize = 200;

/// Runs independent walks and splits the empirical laws by parity of the
/// recording time.
pub fn equilibrium_experiment(
    ladder: &Arc<Ladder>,
    a: &BigRational,
    checkpoints: &[u64],
    replicas: usize,
    master_seed: u64,
) -> Result<EquilibriumReport, HarnessError> {
    if checkpoints.len() < 2 {
        return Err(HarnessError::TooFew {
            what: "equilibrium checkpoints",
            need: 2,
            got: checkpoints.len(),
        });
    }
    let mut checkpoints: Vec<u64> = checkpoints.to_vec();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let t_last = *checkpoints.last().unwrap();
    let mut times: Vec<u64> = Vec::new();
    for &t in &checkpoints {
        times.push(2 * t);
        times.push(2 * t + 1);
    }
    times.push(2 * t_last + 2);
    let (times, rows) = positions_at(ladder, a, &times, replicas, master_seed)?;
    let index_of = |t: u64| times.iter().position(|&x| x == t).expect("recorded time");

    let column = |j: usize| -> Vec<u32> { rows.iter().map(|r| r[j]).collect() };
    let even_laws: Vec<EmpiricalLaw> = checkpoints
        .iter()
        .map(|&t| EmpiricalLaw::from_positions(2 * t, &column(index_of(2 * t))))
        .collect();
    let odd_laws: Vec<EmpiricalLaw> = checkpoints
        .iter()
        .map(|&t| EmpiricalLaw::from_positions(2 * t + 1, &column(index_of(2 * t + 1))))
        .collect();

    let mut support_exact = true;
    for (laws, class) in [(&even_laws, Parity::Even), (&odd_laws, Parity::Odd)] {
        for law in laws.iter() {
            for (raw, &c) in law.counts.iter().enumerate() {
                if c > 0 && ladder.parity_of(VertexId(raw))? != class {
                    support_exact = false;
                }
            }
        }
    }

    let successive = |laws: &[EmpiricalLaw]| -> Result<Vec<f64>, HarnessError> {
        laws.windows(2).map(|w| w[0].tv(&w[1])).collect()
    };
    let tv_even = successive(&even_laws)?;
    let tv_odd = successive(&odd_laws)?;

    // noise floor: TV between two independent multinomial resamples of the
    // final even law
    let final_even = column(index_of(2 * t_last));
    let floor_seed = seed::stage_seed(master_seed, "equilibrium-floor");
    let mut floors = Vec::with_capacity(NOISE_FLOOR_RESAMPLES);
    for b in 0..NOISE_FLOOR_RESAMPLES {
        let mut rng = seed::replica_rng(floor_seed, b as u64);
        let mut draw = || -> Vec<u32> {
            (0..final_even.len())
                .map(|_| final_even[rng.gen_range(0..final_even.len())])
                .collect()
        };
        let (x, y) = (draw(), draw());
        let a_law = EmpiricalLaw::from_positions(0, &x);
        let b_law = EmpiricalLaw::from_positions(0, &y);
        floors.push(a_law.tv(&b_law)?);
    }
    let (noise_floor, noise_floor_sd) = crate::stats::mean_sd(&floors)?;

    let envelope_fit = loglinear_fit(
        &even_laws.last().unwrap().level_counts(ladder),
        MIN_BIN_COUNT,
    )?;

    // joint law of three consecutive steps at the final even time
    let j0 = index_of(2 * t_last);
    let j1 = index_of(2 * t_last + 1);
    let j2 = index_of(2 * t_last + 2);
    let mut triple_counts: BTreeMap<(u32, u32, u32), u64> = BTreeMap::new();
    for r in &rows {
        *triple_counts.entry((r[j0], r[j1], r[j2])).or_insert(0) += 1;
    }
    let triples: Vec<(u32, u32, u32, u64)> = triple_counts
        .into_iter()
        .map(|((a, b, c), n)| (a, b, c, n))
        .collect();

    let mut verdicts = Vec::new();
    verdicts.push(Verdict::new(
        "equilibrium.support",
        support_exact,
        "even-time laws vanish on the odd class and vice versa".to_string(),
    ));
    let last_tv = *tv_even.last().unwrap();
    verdicts.push(Verdict::new(
        "equilibrium.stabilization",
        last_tv < 2.0 * noise_floor,
        format!(
            "final even-law TV {last_tv:.5} < 2 x noise floor {noise_floor:.5}"
        ),
    ));
    verdicts.push(Verdict::new(
        "equilibrium.envelope",
        envelope_fit.slope < 0.0,
        format!(
            "level-mass envelope slope {:.4} < 0 (R^2 {:.3})",
            envelope_fit.slope, envelope_fit.r_squared
        ),
    ));
    Ok(EquilibriumReport {
        checkpoints,
        even_laws,
        odd_laws,
        tv_even,
        tv_odd,
        noise_floor,
        noise_floor_sd,
        support_exact,
        envelope_fit,
        triples,
        verdicts,
    })
}
