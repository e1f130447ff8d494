//! Random walk in a fixed random environment on a finite ladder.
//!
//! An environment assigns a nonnegative conductance `x_e` to every edge.
//! The quenched chain moves from `u` to a neighbor `u'` with probability
//! `x_{uu'} / x_u` where `x_u` sums the conductances at `u`.  The chain is
//! reversible with respect to the vertex weights, and on the bipartite
//! ladder the laws at even and odd times converge to the parity equilibria
//! obtained by restricting the vertex weights to one color class.
//!
//! Environments carry one of two normalizations: `Simplex` (edge weights sum
//! to one) or `Reference` (the reference edge has weight one).  Transition
//! probabilities are ratios, so both describe the same chain.

use crate::ladder::{Depth, EdgeId, Ladder, Parity, VertexId};
use crate::stats;
use crate::walk::PathRecord;
use nalgebra::{DMatrix, RowDVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environments require a finite ladder")]
    NotFinite,
    #[error("weight vector has length {got}, ladder has {want} edges")]
    LengthMismatch { got: usize, want: usize },
    #[error("edge {0} has negative or non-finite weight")]
    BadWeight(usize),
    #[error("simplex normalization violated: weights sum to {0}")]
    NotSimplex(f64),
    #[error("reference normalization violated: reference edge weight is {0}")]
    NotReference(f64),
    #[error("reference edge has zero weight; cannot renormalize")]
    ZeroReferenceWeight,
    #[error("edge {0} has zero weight; exact evolution requires strictly positive environments")]
    ZeroWeightEdge(usize),
    #[error("vertex {0} has zero total weight")]
    ZeroVertexWeight(usize),
    #[error("distribution has length {got}, ladder has {want} vertices")]
    DistributionLength { got: usize, want: usize },
    #[error("distribution mass sums to {0}, expected 1")]
    BadMass(f64),
    #[error("vertex {0} has negative mass")]
    NegativeMass(usize),
    #[error("graph error: {0}")]
    Graph(#[from] crate::ladder::GraphError),
    #[error("stats error: {0}")]
    Stats(#[from] stats::StatsError),
    #[error("quenched chain did not reach tv < {eps} within {max_steps} steps \
             (even tv {even_tv}, odd tv {odd_tv})")]
    NoConvergence {
        eps: f64,
        max_steps: u64,
        even_tv: f64,
        odd_tv: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Edge weights sum to one.
    Simplex,
    /// The reference edge has weight one.
    Reference,
}

const SUM_TOL: f64 = 1e-9;

/// Conductances on the edges of a finite ladder.
#[derive(Debug, Clone)]
pub struct Environment {
    ladder: Arc<Ladder>,
    weights: Vec<f64>,
    normalization: Normalization,
}

impl Environment {
    pub fn new(
        ladder: Arc<Ladder>,
        weights: Vec<f64>,
        normalization: Normalization,
    ) -> Result<Self, EnvError> {
        let Depth::Finite(_) = ladder.depth() else {
            return Err(EnvError::NotFinite);
        };
        let want = ladder.edge_count()?;
        if weights.len() != want {
            return Err(EnvError::LengthMismatch {
                got: weights.len(),
                want,
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(EnvError::BadWeight(i));
            }
        }
        match normalization {
            Normalization::Simplex => {
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > SUM_TOL {
                    return Err(EnvError::NotSimplex(sum));
                }
            }
            Normalization::Reference => {
                let r = weights[ladder.reference_edge().0];
                if r != 1.0 {
                    return Err(EnvError::NotReference(r));
                }
            }
        }
        Ok(Environment {
            ladder,
            weights,
            normalization,
        })
    }

    pub fn ladder(&self) -> &Arc<Ladder> {
        &self.ladder
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, e: EdgeId) -> f64 {
        self.weights[e.0]
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Rescales so the weights sum to one.
    pub fn to_simplex(&self) -> Result<Environment, EnvError> {
        let sum: f64 = self.weights.iter().sum();
        if sum <= 0.0 {
            return Err(EnvError::BadMass(sum));
        }
        Environment::new(
            self.ladder.clone(),
            self.weights.iter().map(|w| w / sum).collect(),
            Normalization::Simplex,
        )
    }

    /// Rescales so the reference edge has weight exactly one.
    pub fn to_reference(&self) -> Result<Environment, EnvError> {
        let r = self.weights[self.ladder.reference_edge().0];
        if r <= 0.0 {
            return Err(EnvError::ZeroReferenceWeight);
        }
        let weights: Vec<f64> = self.weights.iter().map(|w| w / r).collect();
        Environment::new(self.ladder.clone(), weights, Normalization::Reference)
    }

    /// Total conductance `x_u` at a vertex.
    pub fn vertex_weight(&self, u: VertexId) -> Result<f64, EnvError> {
        Ok(self
            .ladder
            .incident_edges(u)?
            .iter()
            .map(|&(e, _)| self.weights[e.0])
            .sum())
    }

    /// `x_{uu'} / x_u`, or zero when the vertices are not adjacent.
    pub fn transition_prob(&self, u: VertexId, v: VertexId) -> Result<f64, EnvError> {
        match self.ladder.edge_between(u, v) {
            None => Ok(0.0),
            Some(e) => {
                let xu = self.vertex_weight(u)?;
                if xu <= 0.0 {
                    return Err(EnvError::ZeroVertexWeight(u.0));
                }
                Ok(self.weights[e.0] / xu)
            }
        }
    }

    fn require_strictly_positive(&self) -> Result<(), EnvError> {
        if let Some(i) = self.weights.iter().position(|&w| w <= 0.0) {
            return Err(EnvError::ZeroWeightEdge(i));
        }
        Ok(())
    }

    /// Invariant distribution of the quenched chain: vertex weights over
    /// their total (which is twice the edge mass).
    pub fn stationary_distribution(&self) -> Result<VertexDistribution, EnvError> {
        let n = self.ladder.vertex_count()?;
        let mut probs = vec![0.0; n];
        for v in 0..n {
            probs[v] = self.vertex_weight(VertexId(v))?;
        }
        let total: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= total;
        }
        VertexDistribution::new(probs)
    }

    /// Equilibrium of the two-step chain on one color class: the vertex
    /// weight on the class, normalized by the total edge mass (each edge
    /// has exactly one endpoint in each class, so the class masses agree
    /// with the edge mass).
    pub fn parity_equilibrium(&self, parity: Parity) -> Result<VertexDistribution, EnvError> {
        let n = self.ladder.vertex_count()?;
        let edge_mass: f64 = self.weights.iter().sum();
        let mut probs = vec![0.0; n];
        for v in 0..n {
            let id = VertexId(v);
            if self.ladder.parity_of(id)? == parity {
                probs[v] = self.vertex_weight(id)? / edge_mass;
            }
        }
        VertexDistribution::new(probs)
    }

    /// Probability that the quenched chain traces `path` from its first
    /// vertex.  Non-adjacent consecutive vertices and zero-weight edges on
    /// the path give probability zero; a zero-weight vertex along a still
    /// possible path is an error.
    pub fn cylinder_probability(&self, path: &PathRecord) -> Result<f64, EnvError> {
        let mut p = 1.0;
        for w in path.vertices.windows(2) {
            p *= self.transition_prob(w[0], w[1])?;
            if p == 0.0 {
                return Ok(0.0);
            }
        }
        Ok(p)
    }

    /// Samples the quenched chain for `horizon` steps from `start`.
    pub fn simulate<R: Rng>(
        &self,
        start: VertexId,
        horizon: u64,
        rng: &mut R,
    ) -> Result<PathRecord, EnvError> {
        let mut vertices = Vec::with_capacity(horizon as usize + 1);
        let mut cur = start;
        vertices.push(cur);
        for _ in 0..horizon {
            let inc = self.ladder.incident_edges(cur)?;
            let total: f64 = inc.iter().map(|&(e, _)| self.weights[e.0]).sum();
            if total <= 0.0 {
                return Err(EnvError::ZeroVertexWeight(cur.0));
            }
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut next = inc[inc.len() - 1].1;
            for &(e, v) in &inc {
                acc += self.weights[e.0];
                if target < acc {
                    next = v;
                    break;
                }
            }
            vertices.push(next);
            cur = next;
        }
        Ok(PathRecord::new(vertices))
    }
}

/// Probability distribution over the vertices of a finite ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexDistribution {
    probs: Vec<f64>,
}

impl VertexDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, EnvError> {
        if let Some(i) = probs.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(EnvError::NegativeMass(i));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(EnvError::BadMass(sum));
        }
        Ok(VertexDistribution { probs })
    }

    pub fn point_mass(ladder: &Ladder, v: VertexId) -> Result<Self, EnvError> {
        let n = ladder.vertex_count()?;
        if v.0 >= n {
            return Err(EnvError::DistributionLength { got: v.0, want: n });
        }
        let mut probs = vec![0.0; n];
        probs[v.0] = 1.0;
        Ok(VertexDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, v: VertexId) -> f64 {
        self.probs[v.0]
    }

    pub fn tv(&self, other: &VertexDistribution) -> Result<f64, EnvError> {
        Ok(stats::tv_distance(&self.probs, &other.probs)?)
    }

    /// Mass carried by vertices of the given parity.
    pub fn parity_mass(&self, ladder: &Ladder, parity: Parity) -> Result<f64, EnvError> {
        let mut m = 0.0;
        for (v, &p) in self.probs.iter().enumerate() {
            if ladder.parity_of(VertexId(v))? == parity {
                m += p;
            }
        }
        Ok(m)
    }

    /// True when every vertex of the opposite parity carries exactly zero
    /// mass (bitwise zero, not merely small).
    pub fn supported_on_parity(&self, ladder: &Ladder, parity: Parity) -> Result<bool, EnvError> {
        for (v, &p) in self.probs.iter().enumerate() {
            if ladder.parity_of(VertexId(v))? != parity && p != 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Row-stochastic transition matrix of the quenched chain, for exact
/// distribution evolution.  Requires a strictly positive environment.
pub struct QuenchedChain {
    matrix: DMatrix<f64>,
}

impl QuenchedChain {
    pub fn new(env: &Environment) -> Result<Self, EnvError> {
        env.require_strictly_positive()?;
        let n = env.ladder.vertex_count()?;
        let mut matrix = DMatrix::zeros(n, n);
        for u in 0..n {
            let xu = env.vertex_weight(VertexId(u))?;
            if xu <= 0.0 {
                return Err(EnvError::ZeroVertexWeight(u));
            }
            for (e, v) in env.ladder.incident_edges(VertexId(u))? {
                matrix[(u, v.0)] = env.weights[e.0] / xu;
            }
        }
        Ok(QuenchedChain { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn transition(&self, u: VertexId, v: VertexId) -> f64 {
        self.matrix[(u.0, v.0)]
    }

    /// Exact law after `steps` transitions from `mu`.
    pub fn evolve(&self, mu: &VertexDistribution, steps: u64) -> VertexDistribution {
        let mut row = RowDVector::from_row_slice(mu.probs());
        for _ in 0..steps {
            row *= &self.matrix;
        }
        VertexDistribution {
            probs: row.iter().copied().collect(),
        }
    }
}

/// Largest detailed balance residual over all edges:
/// `max_e |x_u p(u,u') - x_e|` and `|x_u p(u,u') - x_{u'} p(u',u)|`,
/// with everything scaled by the total edge mass so the residual is
/// comparable across normalizations.
pub fn detailed_balance_residual(env: &Environment) -> Result<f64, EnvError> {
    let ne = env.ladder.edge_count()?;
    let mass: f64 = env.weights.iter().sum();
    let mut worst = 0.0f64;
    for raw in 0..ne {
        let e = EdgeId(raw);
        let (u, v) = env.ladder.edge_endpoints(e)?;
        let xu = env.vertex_weight(u)?;
        let xv = env.vertex_weight(v)?;
        if xu <= 0.0 || xv <= 0.0 {
            if env.weights[raw] > 0.0 {
                return Err(EnvError::ZeroVertexWeight(if xu <= 0.0 { u.0 } else { v.0 }));
            }
            continue;
        }
        let flow_uv = xu * (env.weights[raw] / xu);
        let flow_vu = xv * (env.weights[raw] / xv);
        worst = worst.max((flow_uv - env.weights[raw]).abs() / mass);
        worst = worst.max((flow_uv - flow_vu).abs() / mass);
    }
    Ok(worst)
}

/// Largest reversibility residual
/// `max_{t <= t_max, v} |x_0 Q_0(X_t = v) - x_v Q_v(X_t = 0)|`
/// over exact evolutions, scaled by the total vertex mass.
pub fn reversibility_residual(env: &Environment, t_max: u64) -> Result<f64, EnvError> {
    let chain = QuenchedChain::new(env)?;
    let n = env.ladder.vertex_count()?;
    let start = env.ladder.start();
    let x: Vec<f64> = (0..n)
        .map(|v| env.vertex_weight(VertexId(v)))
        .collect::<Result<_, _>>()?;
    let mass: f64 = x.iter().sum();
    let mut from_start = VertexDistribution::point_mass(&env.ladder, start)?;
    let mut from_v: Vec<VertexDistribution> = (0..n)
        .map(|v| VertexDistribution::point_mass(&env.ladder, VertexId(v)))
        .collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for _t in 1..=t_max {
        from_start = chain.evolve(&from_start, 1);
        for dist in from_v.iter_mut() {
            *dist = chain.evolve(dist, 1);
        }
        for v in 0..n {
            let lhs = x[start.0] * from_start.prob(VertexId(v));
            let rhs = x[v] * from_v[v].prob(start);
            worst = worst.max((lhs - rhs).abs() / mass);
        }
    }
    Ok(worst)
}

/// Largest violation of the return bound `Q_0(X_t = v) <= x_v / x_0` over
/// `t <= t_max` (positive means the bound failed by that much).
pub fn return_bound_violation(env: &Environment, t_max: u64) -> Result<f64, EnvError> {
    let chain = QuenchedChain::new(env)?;
    let n = env.ladder.vertex_count()?;
    let start = env.ladder.start();
    let x0 = env.vertex_weight(start)?;
    let mut mu = VertexDistribution::point_mass(&env.ladder, start)?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 1..=t_max {
        mu = chain.evolve(&mu, 1);
        for v in 0..n {
            let bound = env.vertex_weight(VertexId(v))? / x0;
            worst = worst.max(mu.prob(VertexId(v)) - bound);
        }
    }
    Ok(worst)
}

/// Convergence of the quenched chain from the start vertex to the parity
/// equilibria along even and odd times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuenchedReport {
    /// Smallest even time `t` with both `tv(law_t, even eq) < eps` and
    /// `tv(law_{t+1}, odd eq) < eps`.
    pub t_star: u64,
    /// `(t, tv)` at even times, recorded up to and including `t_star`.
    pub even_curve: Vec<(u64, f64)>,
    /// `(t, tv)` at odd times.
    pub odd_curve: Vec<(u64, f64)>,
    /// Whether every law kept exact zero mass on the wrong parity class.
    pub parity_support_exact: bool,
}

/// Evolves the point mass at the start vertex and records total variation
/// to the parity equilibria until both fall below `eps`.
pub fn quenched_convergence_check(
    env: &Environment,
    eps: f64,
    max_steps: u64,
) -> Result<QuenchedReport, EnvError> {
    let ladder = env.ladder();
    let chain = QuenchedChain::new(env)?;
    let start = ladder.start();
    let start_parity = ladder.parity_of(start)?;
    let even_eq = env.parity_equilibrium(start_parity)?;
    let odd_eq = env.parity_equilibrium(start_parity.flip())?;
    let mut mu = VertexDistribution::point_mass(ladder, start)?;
    let mut support_exact = mu.supported_on_parity(ladder, start_parity)?;
    let mut even_curve = Vec::new();
    let mut odd_curve = Vec::new();
    let mut t = 0u64;
    loop {
        let even_tv = mu.tv(&even_eq)?;
        even_curve.push((t, even_tv));
        let nu = chain.evolve(&mu, 1);
        support_exact &= nu.supported_on_parity(ladder, start_parity.flip())?;
        let odd_tv = nu.tv(&odd_eq)?;
        odd_curve.push((t + 1, odd_tv));
        if even_tv < eps && odd_tv < eps {
            return Ok(QuenchedReport {
                t_star: t,
                even_curve,
                odd_curve,
                parity_support_exact: support_exact,
            });
        }
        if t + 2 > max_steps {
            return Err(EnvError::NoConvergence {
                eps,
                max_steps,
                even_tv,
                odd_tv,
            });
        }
        mu = chain.evolve(&nu, 1);
        support_exact &= mu.supported_on_parity(ladder, start_parity)?;
        t += 2;
    }
}

/// Independent exponential weights normalized to the simplex: a convenient
/// strictly positive random environment for quenched checks.
pub fn random_environment<R: Rng>(ladder: Arc<Ladder>, rng: &mut R) -> Result<Environment, EnvError> {
    let ne = ladder.edge_count()?;
    let mut weights: Vec<f64> = (0..ne)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Environment::new(ladder, weights, Normalization::Simplex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::FiniteTree;
    use crate::seed::replica_rng;
    use approx::assert_relative_eq;

    fn square() -> Arc<Ladder> {
        let tree = FiniteTree::segment(2).unwrap();
        Arc::new(Ladder::with_defaults(tree, Depth::Finite(1)).unwrap())
    }

    fn uniform_square() -> Environment {
        Environment::new(square(), vec![0.25; 4], Normalization::Simplex).unwrap()
    }

    fn deep(depth: u32) -> Arc<Ladder> {
        let tree = FiniteTree::segment(2).unwrap();
        Arc::new(Ladder::with_defaults(tree, Depth::Finite(depth)).unwrap())
    }

    #[test]
    fn vertex_weights_and_transitions_uniform_square() {
        let env = uniform_square();
        for v in 0..4 {
            assert_relative_eq!(env.vertex_weight(VertexId(v)).unwrap(), 0.5);
        }
        // total vertex mass is twice the edge mass
        let total: f64 = (0..4)
            .map(|v| env.vertex_weight(VertexId(v)).unwrap())
            .sum();
        assert_relative_eq!(total, 2.0);
        assert_relative_eq!(
            env.transition_prob(VertexId(0), VertexId(1)).unwrap(),
            0.5
        );
        assert_eq!(env.transition_prob(VertexId(0), VertexId(3)).unwrap(), 0.0);
    }

    #[test]
    fn two_step_law_from_point_mass_uniform_square() {
        // by hand: after two steps from the start each even vertex carries
        // mass 1/2 (two paths of probability 1/4 reach each)
        let env = uniform_square();
        let chain = QuenchedChain::new(&env).unwrap();
        let mu = VertexDistribution::point_mass(env.ladder(), VertexId(0)).unwrap();
        let law = chain.evolve(&mu, 2);
        assert_relative_eq!(law.prob(VertexId(0)), 0.5, max_relative = 1e-14);
        assert_relative_eq!(law.prob(VertexId(3)), 0.5, max_relative = 1e-14);
        assert_eq!(law.prob(VertexId(1)), 0.0);
        assert_eq!(law.prob(VertexId(2)), 0.0);
    }

    #[test]
    fn stationary_distribution_is_invariant() {
        let mut rng = replica_rng(31, 0);
        let env = random_environment(deep(3), &mut rng).unwrap();
        let chain = QuenchedChain::new(&env).unwrap();
        let pi = env.stationary_distribution().unwrap();
        let pi1 = chain.evolve(&pi, 1);
        assert!(pi.tv(&pi1).unwrap() < 1e-14);
        // uniform square: stationary is uniform on vertices
        let env = uniform_square();
        let pi = env.stationary_distribution().unwrap();
        for v in 0..4 {
            assert_relative_eq!(pi.prob(VertexId(v)), 0.25, max_relative = 1e-14);
        }
    }

    #[test]
    fn parity_equilibria_swap_under_one_step() {
        let mut rng = replica_rng(32, 1);
        for _ in 0..20 {
            let env = random_environment(deep(3), &mut rng).unwrap();
            let chain = QuenchedChain::new(&env).unwrap();
            let even = env.parity_equilibrium(Parity::Even).unwrap();
            let odd = env.parity_equilibrium(Parity::Odd).unwrap();
            // one exact step carries each class equilibrium to the other
            assert!(chain.evolve(&even, 1).tv(&odd).unwrap() < 1e-13);
            assert!(chain.evolve(&odd, 1).tv(&even).unwrap() < 1e-13);
            // and the class masses agree with the edge mass (here 1)
            assert_relative_eq!(
                even.parity_mass(env.ladder(), Parity::Even).unwrap(),
                1.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn detailed_balance_and_reversibility_on_random_environments() {
        let mut rng = replica_rng(33, 2);
        for _ in 0..25 {
            let env = random_environment(deep(3), &mut rng).unwrap();
            assert!(detailed_balance_residual(&env).unwrap() < 1e-12);
            assert!(reversibility_residual(&env, 6).unwrap() < 1e-12);
            assert!(return_bound_violation(&env, 20).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn quenched_convergence_reaches_small_tv() {
        let mut rng = replica_rng(34, 3);
        let env = random_environment(deep(3), &mut rng).unwrap();
        let report = quenched_convergence_check(&env, 1e-8, 1_000_000).unwrap();
        assert!(report.parity_support_exact);
        assert_eq!(report.t_star % 2, 0);
        // recorded curves are nonincreasing up to float noise
        let evs: Vec<f64> = report.even_curve.iter().map(|&(_, tv)| tv).collect();
        let ods: Vec<f64> = report.odd_curve.iter().map(|&(_, tv)| tv).collect();
        assert!(stats::nonincreasing(&evs, 1e-12));
        assert!(stats::nonincreasing(&ods, 1e-12));
        assert!(*evs.last().unwrap() < 1e-8);
        assert!(*ods.last().unwrap() < 1e-8);
    }

    #[test]
    fn quenched_convergence_reports_failure() {
        let mut rng = replica_rng(35, 0);
        let env = random_environment(deep(3), &mut rng).unwrap();
        match quenched_convergence_check(&env, 1e-300, 10) {
            Err(EnvError::NoConvergence { max_steps: 10, .. }) => {}
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn normalization_roundtrip_preserves_ratios() {
        let mut rng = replica_rng(36, 0);
        let env = random_environment(deep(4), &mut rng).unwrap();
        let reference = env.to_reference().unwrap();
        assert_eq!(
            reference.weight(env.ladder().reference_edge()),
            1.0,
            "reference weight must be exactly one"
        );
        let back = reference.to_simplex().unwrap();
        for (a, b) in env.weights().iter().zip(back.weights()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn cylinder_probability_multiplies_transitions() {
        let env = uniform_square();
        let p = env
            .cylinder_probability(&PathRecord::new(vec![VertexId(0), VertexId(1), VertexId(3)]))
            .unwrap();
        assert_relative_eq!(p, 0.25, max_relative = 1e-14);
        // zero-weight edge on the path gives zero, not an error
        let mut w = vec![0.25; 4];
        w[0] = 0.0;
        let sum: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / sum).collect();
        let env = Environment::new(square(), w, Normalization::Simplex).unwrap();
        let p = env
            .cylinder_probability(&PathRecord::new(vec![VertexId(0), VertexId(1)]))
            .unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn simulated_chain_matches_exact_two_step_law() {
        let env = uniform_square();
        let replicas = 50_000u64;
        let mut returns = 0u64;
        for i in 0..replicas {
            let mut rng = replica_rng(0xBEEF, i);
            let path = env.simulate(VertexId(0), 2, &mut rng).unwrap();
            if path.end() == Some(VertexId(0)) {
                returns += 1;
            }
        }
        let freq = returns as f64 / replicas as f64;
        let se = (0.5 * 0.5 / replicas as f64).sqrt();
        assert!((freq - 0.5).abs() < 4.0 * se, "freq {freq}");
    }

    #[test]
    fn rejects_bad_environments() {
        let l = square();
        assert!(matches!(
            Environment::new(l.clone(), vec![0.25; 3], Normalization::Simplex),
            Err(EnvError::LengthMismatch { got: 3, want: 4 })
        ));
        assert!(matches!(
            Environment::new(l.clone(), vec![0.5, 0.5, 0.5, 0.5], Normalization::Simplex),
            Err(EnvError::NotSimplex(_))
        ));
        assert!(matches!(
            Environment::new(l.clone(), vec![-0.25, 0.5, 0.5, 0.25], Normalization::Simplex),
            Err(EnvError::BadWeight(0))
        ));
        assert!(matches!(
            Environment::new(l.clone(), vec![0.5, 1.0, 1.0, 1.0], Normalization::Reference),
            Err(EnvError::NotReference(_))
        ));
        // zero-weight edges are representable on the simplex but rejected
        // by exact evolution
        let env =
            Environment::new(l.clone(), vec![0.0, 0.5, 0.25, 0.25], Normalization::Simplex)
                .unwrap();
        assert!(matches!(
            QuenchedChain::new(&env),
            Err(EnvError::ZeroWeightEdge(0))
        ));
        assert!(matches!(env.to_reference(), Err(EnvError::ZeroReferenceWeight)));
        // unbounded ladders carry no finite environment
        let tree = FiniteTree::segment(2).unwrap();
        let unb = Arc::new(Ladder::with_defaults(tree, Depth::Unbounded).unwrap());
        assert!(matches!(
            Environment::new(unb, vec![], Normalization::Simplex),
            Err(EnvError::NotFinite)
        ));
    }

    #[test]
    fn distribution_validation() {
        assert!(VertexDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(matches!(
            VertexDistribution::new(vec![0.5, 0.4]),
            Err(EnvError::BadMass(_))
        ));
        assert!(matches!(
            VertexDistribution::new(vec![1.5, -0.5]),
            Err(EnvError::NegativeMass(1))
        ));
    }
}
