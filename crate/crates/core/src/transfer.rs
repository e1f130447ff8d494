//! Transfer operators for finite-state Gibbs chains.
//!
//! A volume-`n` system has a left boundary state, slices `s_1..s_n`, and
//! rungs `r_1..r_{n-1}` between consecutive slices.  Its unnormalized weight
//! is
//!
//! ```text
//! W = exp(-H_left(left, s_1))
//!     * prod_{i=1}^{n-1} exp(-H_middle(s_i, r_i, s_{i+1}))
//!     * g_right(s_n)
//! ```
//!
//! Hamiltonian entries may be `+inf` (forbidden local configurations, `null`
//! in the JSON form).  Summing the rung out of the middle factor gives the
//! transfer kernel `k(s, s') = sum_r exp(-H_middle(s, r, s'))`; expectations
//! of window observables reduce to propagating the right boundary weight
//! through powers of `k`, and the infinite-volume limit replaces the
//! propagated weight by the Perron eigenvector.  Every formula here is
//! checked against brute-force enumeration in the tests.

use crate::stats::{self, FitResult};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("inconsistent dimensions: {0}")]
    BadDimensions(String),
    #[error("invalid value: {0}")]
    BadValue(String),
    #[error("kernel is not primitive: {0}")]
    NotPrimitive(String),
    #[error("power iteration failed to reach tol {tol} in {iterations} iterations \
             (residual {residual})")]
    PowerIteration {
        tol: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("window [0, {l}] does not fit in volume {n} (need l < n)")]
    VolumeTooSmall { n: usize, l: usize },
    #[error("volume has zero total weight (all configurations forbidden)")]
    DegenerateVolume,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("stats error: {0}")]
    Stats(#[from] stats::StatsError),
}

/// Serialized form: energies nested `[s][r][s']` and `[left][s]`, with
/// `null` meaning a forbidden (infinite-energy) entry.
#[derive(Serialize, Deserialize)]
struct GibbsSpecFile {
    h_middle: Vec<Vec<Vec<Option<f64>>>>,
    h_left: Vec<Vec<Option<f64>>>,
    g_right: Vec<f64>,
}

/// Finite-state Gibbs specification.
#[derive(Debug, Clone)]
pub struct GibbsSpec {
    slice_states: usize,
    rung_states: usize,
    left_states: usize,
    h_middle: Vec<f64>,
    h_left: Vec<f64>,
    g_right: Vec<f64>,
}

fn check_energy(x: Option<f64>, what: &str) -> Result<f64, TransferError> {
    match x {
        None => Ok(f64::INFINITY),
        Some(v) if v.is_nan() || v == f64::NEG_INFINITY => {
            Err(TransferError::BadValue(format!("{what} is {v}")))
        }
        Some(v) => Ok(v),
    }
}

impl GibbsSpec {
    pub fn new(
        h_middle: Vec<Vec<Vec<Option<f64>>>>,
        h_left: Vec<Vec<Option<f64>>>,
        g_right: Vec<f64>,
    ) -> Result<Self, TransferError> {
        let s = h_middle.len();
        if s == 0 {
            return Err(TransferError::BadDimensions("no slice states".into()));
        }
        let r = h_middle[0].len();
        if r == 0 {
            return Err(TransferError::BadDimensions("no rung states".into()));
        }
        let l = h_left.len();
        if l == 0 {
            return Err(TransferError::BadDimensions("no left states".into()));
        }
        if g_right.len() != s {
            return Err(TransferError::BadDimensions(format!(
                "g_right has {} entries for {s} slice states",
                g_right.len()
            )));
        }
        let mut hm = Vec::with_capacity(s * r * s);
        for (i, plane) in h_middle.iter().enumerate() {
            if plane.len() != r {
                return Err(TransferError::BadDimensions(format!(
                    "h_middle[{i}] has {} rung rows, expected {r}",
                    plane.len()
                )));
            }
            for (j, row) in plane.iter().enumerate() {
                if row.len() != s {
                    return Err(TransferError::BadDimensions(format!(
                        "h_middle[{i}][{j}] has {} entries, expected {s}",
                        row.len()
                    )));
                }
                for (k, &x) in row.iter().enumerate() {
                    hm.push(check_energy(x, &format!("h_middle[{i}][{j}][{k}]"))?);
                }
            }
        }
        let mut hl = Vec::with_capacity(l * s);
        for (i, row) in h_left.iter().enumerate() {
            if row.len() != s {
                return Err(TransferError::BadDimensions(format!(
                    "h_left[{i}] has {} entries, expected {s}",
                    row.len()
                )));
            }
            for (k, &x) in row.iter().enumerate() {
                hl.push(check_energy(x, &format!("h_left[{i}][{k}]"))?);
            }
        }
        for (k, &g) in g_right.iter().enumerate() {
            if !(g > 0.0) || !g.is_finite() {
                return Err(TransferError::BadValue(format!(
                    "g_right[{k}] = {g} must be positive and finite"
                )));
            }
        }
        Ok(GibbsSpec {
            slice_states: s,
            rung_states: r,
            left_states: l,
            h_middle: hm,
            h_left: hl,
            g_right,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, TransferError> {
        let file: GibbsSpecFile = serde_json::from_str(text)?;
        Self::new(file.h_middle, file.h_left, file.g_right)
    }

    pub fn to_json(&self) -> String {
        let wrap = |x: f64| if x.is_finite() { Some(x) } else { None };
        let s = self.slice_states;
        let r = self.rung_states;
        let file = GibbsSpecFile {
            h_middle: (0..s)
                .map(|i| {
                    (0..r)
                        .map(|j| (0..s).map(|k| wrap(self.h_middle(i, j, k))).collect())
                        .collect()
                })
                .collect(),
            h_left: (0..self.left_states)
                .map(|i| (0..s).map(|k| wrap(self.h_left(i, k))).collect())
                .collect(),
            g_right: self.g_right.clone(),
        };
        serde_json::to_string_pretty(&file).expect("spec serializes")
    }

    pub fn slice_states(&self) -> usize {
        self.slice_states
    }

    pub fn rung_states(&self) -> usize {
        self.rung_states
    }

    pub fn left_states(&self) -> usize {
        self.left_states
    }

    #[inline]
    pub fn h_middle(&self, s: usize, r: usize, s2: usize) -> f64 {
        self.h_middle[(s * self.rung_states + r) * self.slice_states + s2]
    }

    #[inline]
    pub fn h_left(&self, left: usize, s: usize) -> f64 {
        self.h_left[left * self.slice_states + s]
    }

    #[inline]
    pub fn g_right(&self, s: usize) -> f64 {
        self.g_right[s]
    }

    /// `exp(-H_middle)`, zero for forbidden entries.
    #[inline]
    pub fn middle_weight(&self, s: usize, r: usize, s2: usize) -> f64 {
        (-self.h_middle(s, r, s2)).exp()
    }

    /// `exp(-H_left)`, zero for forbidden entries.
    #[inline]
    pub fn left_weight(&self, left: usize, s: usize) -> f64 {
        (-self.h_left(left, s)).exp()
    }
}

fn components_of(pattern: &[Vec<bool>]) -> Vec<Vec<usize>> {
    // Kosaraju: order by forward DFS finish time, then collect components
    // along reversed edges
    let d = pattern.len();
    let mut order = Vec::with_capacity(d);
    let mut seen = vec![false; d];
    for start in 0..d {
        if seen[start] {
            continue;
        }
        // iterative DFS with explicit post-order
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < d {
                let v = *next;
                *next += 1;
                if pattern[u][v] && !seen[v] {
                    seen[v] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
                stack.pop();
            }
        }
    }
    let mut comp = vec![usize::MAX; d];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![root];
        comp[root] = id;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for v in 0..d {
                // reversed edge v -> u
                if pattern[v][u] && comp[v] == usize::MAX {
                    comp[v] = id;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Checks that the positivity pattern of the kernel is primitive (strongly
/// connected and aperiodic); the error names the offending structure.
fn check_primitive(k: &DMatrix<f64>) -> Result<(), TransferError> {
    let d = k.nrows();
    let pattern: Vec<Vec<bool>> = (0..d)
        .map(|i| (0..d).map(|j| k[(i, j)] > 0.0).collect())
        .collect();
    let components = components_of(&pattern);
    if components.len() > 1 {
        return Err(TransferError::NotPrimitive(format!(
            "kernel pattern splits into {} blocks: {:?}",
            components.len(),
            components
        )));
    }
    // period: gcd of level[u] + 1 - level[v] over edges of the strongly
    // connected pattern
    let mut level = vec![i64::MIN; d];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..d {
            if pattern[u][v] && level[v] == i64::MIN {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0u64;
    for u in 0..d {
        for v in 0..d {
            if pattern[u][v] {
                period = gcd(period, (level[u] + 1 - level[v]).unsigned_abs());
            }
        }
    }
    if period != 1 {
        return Err(TransferError::NotPrimitive(format!(
            "kernel pattern is periodic with period {period}"
        )));
    }
    Ok(())
}

/// Builds the kernel `k(s, s') = sum_r exp(-H_middle(s, r, s'))` and checks
/// primitivity.
pub fn kernel_from_spec(spec: &GibbsSpec) -> Result<DMatrix<f64>, TransferError> {
    let s = spec.slice_states();
    let mut k = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            let mut total = 0.0;
            for r in 0..spec.rung_states() {
                total += spec.middle_weight(i, r, j);
            }
            k[(i, j)] = total;
        }
    }
    check_primitive(&k)?;
    Ok(k)
}

/// Leading eigenpair of a primitive kernel.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    /// Right Perron vector, scaled so that `<left, right> = 1`.
    pub right: DVector<f64>,
    /// Left Perron vector, scaled to unit l1 norm.
    pub left: DVector<f64>,
    /// `max |k v - lambda v|` over `lambda * max |v|`.
    pub right_residual: f64,
    pub left_residual: f64,
    pub iterations: usize,
    /// Rough `|lambda_2| / lambda` from the convergence ratio.
    pub gap_estimate: f64,
}

/// Simultaneous left/right power iteration.
pub fn leading_eigenpair(
    k: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Eigenpair, TransferError> {
    let d = k.nrows();
    let kt = k.transpose();
    let mut v = DVector::from_element(d, 1.0 / d as f64);
    let mut u = v.clone();
    let mut lambda = 0.0;
    let mut ratio_window = Vec::new();
    let mut prev_delta = f64::NAN;
    for it in 1..=max_iter {
        let kv = k * &v;
        let ku = &kt * &u;
        let nv = kv.iter().map(|x| x.abs()).sum::<f64>();
        let nu = ku.iter().map(|x| x.abs()).sum::<f64>();
        if nv <= 0.0 || nu <= 0.0 {
            return Err(TransferError::DegenerateVolume);
        }
        let v_next = kv / nv;
        let u_next = ku / nu;
        let delta = (&v_next - &v)
            .iter()
            .chain((&u_next - &u).iter())
            .map(|x| x.abs())
            .fold(0.0, f64::max);
        if prev_delta.is_finite() && prev_delta > 0.0 && delta > 0.0 {
            ratio_window.push(delta / prev_delta);
            if ratio_window.len() > 8 {
                ratio_window.remove(0);
            }
        }
        prev_delta = delta;
        v = v_next;
        u = u_next;
        lambda = nv;
        let res_r = residual(k, &v, lambda);
        let res_l = residual(&kt, &u, lambda);
        if res_r < tol && res_l < tol {
            // final normalization: <u, v> = 1 with u on the unit simplex
            let s_u: f64 = u.iter().sum();
            let u = &u / s_u;
            let dot = u.dot(&v);
            let v = &v / dot;
            let gap = if ratio_window.is_empty() {
                0.0
            } else {
                let g: f64 = ratio_window.iter().map(|r| r.ln()).sum::<f64>()
                    / ratio_window.len() as f64;
                g.exp().min(1.0)
            };
            return Ok(Eigenpair {
                lambda,
                right_residual: residual(k, &v, lambda),
                left_residual: residual(&kt, &u, lambda),
                right: v,
                left: u,
                iterations: it,
                gap_estimate: gap,
            });
        }
    }
    Err(TransferError::PowerIteration {
        tol,
        iterations: max_iter,
        residual: residual(k, &v, lambda),
    })
}

fn residual(k: &DMatrix<f64>, v: &DVector<f64>, lambda: f64) -> f64 {
    let kv = k * v;
    let num = (&kv - v * lambda)
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    let den = lambda * v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    num / den
}

/// Moduli of all kernel eigenvalues, descending: the dense reference the
/// power iteration is checked against.
pub fn dense_moduli(k: &DMatrix<f64>) -> Vec<f64> {
    let mut m: Vec<f64> = k
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    m.sort_by(|a, b| b.total_cmp(a));
    m
}

/// The window `[0, l]` of a configuration: the left state, slices
/// `s_1..s_l`, and rungs `r_1..r_l` (rung `l` couples slice `l` to the
/// boundary slice `l+1`).
pub struct WindowConfig<'a> {
    pub left: usize,
    pub slices: &'a [usize],
    pub rungs: &'a [usize],
}

fn odometer(radices: &[usize], mut visit: impl FnMut(&[usize])) {
    if radices.iter().any(|&r| r == 0) {
        return;
    }
    let mut digits = vec![0usize; radices.len()];
    loop {
        visit(&digits);
        let mut i = 0;
        loop {
            if i == digits.len() {
                return;
            }
            digits[i] += 1;
            if digits[i] < radices[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Bundled kernel and eigenpair for repeated expectations.
pub struct TransferSystem {
    spec: GibbsSpec,
    kernel: DMatrix<f64>,
    eigen: Eigenpair,
}

impl TransferSystem {
    pub fn new(spec: GibbsSpec) -> Result<Self, TransferError> {
        let kernel = kernel_from_spec(&spec)?;
        let eigen = leading_eigenpair(&kernel, 1e-14, 200_000)?;
        Ok(TransferSystem {
            spec,
            kernel,
            eigen,
        })
    }

    pub fn spec(&self) -> &GibbsSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn eigen(&self) -> &Eigenpair {
        &self.eigen
    }

    /// Sums the observable against the window weights, indexed by the
    /// boundary slice `s_{l+1}`:
    /// `g^f(b) = sum_window f * exp(-H_left) * prod exp(-H_middle)`.
    pub fn window_vector<F: Fn(&WindowConfig) -> f64>(&self, l: usize, f: F) -> DVector<f64> {
        let s = self.spec.slice_states();
        let mut g = DVector::zeros(s);
        if l == 0 {
            for left in 0..self.spec.left_states() {
                let val = f(&WindowConfig {
                    left,
                    slices: &[],
                    rungs: &[],
                });
                for b in 0..s {
                    g[b] += val * self.spec.left_weight(left, b);
                }
            }
            return g;
        }
        // radices: left, s_1, r_1, ..., s_l, r_l
        let mut radices = vec![self.spec.left_states()];
        for _ in 0..l {
            radices.push(s);
            radices.push(self.spec.rung_states());
        }
        let mut slices = vec![0usize; l];
        let mut rungs = vec![0usize; l];
        odometer(&radices, |digits| {
            let left = digits[0];
            for i in 0..l {
                slices[i] = digits[1 + 2 * i];
                rungs[i] = digits[2 + 2 * i];
            }
            let mut base = self.spec.left_weight(left, slices[0]);
            for i in 0..l.saturating_sub(1) {
                base *= self.spec.middle_weight(slices[i], rungs[i], slices[i + 1]);
            }
            if base == 0.0 {
                return;
            }
            let val = f(&WindowConfig {
                left,
                slices: &slices,
                rungs: &rungs,
            });
            if val == 0.0 {
                return;
            }
            for b in 0..s {
                g[b] += val * base * self.spec.middle_weight(slices[l - 1], rungs[l - 1], b);
            }
        });
        g
    }

    /// Right boundary weight propagated `m` kernel steps, renormalized each
    /// step (ratios of propagated weights are scale-free, so this doubles
    /// as the underflow guard).
    fn propagated_boundary(&self, m: usize) -> Result<DVector<f64>, TransferError> {
        let mut w = DVector::from_iterator(
            self.spec.slice_states(),
            (0..self.spec.slice_states()).map(|s| self.spec.g_right(s)),
        );
        for _ in 0..m {
            w = &self.kernel * w;
            let n1: f64 = w.iter().map(|x| x.abs()).sum();
            if n1 <= 0.0 {
                return Err(TransferError::DegenerateVolume);
            }
            w /= n1;
        }
        Ok(w)
    }

    /// Expectation of the window observable under the volume-`n` Gibbs law.
    pub fn finite_volume_expectation<F: Fn(&WindowConfig) -> f64>(
        &self,
        n: usize,
        l: usize,
        f: F,
    ) -> Result<f64, TransferError> {
        if n == 0 || l >= n {
            return Err(TransferError::VolumeTooSmall { n, l });
        }
        let w = self.propagated_boundary(n - 1 - l)?;
        let num = self.window_vector(l, f).dot(&w);
        let den = self.window_vector(l, |_| 1.0).dot(&w);
        if den <= 0.0 {
            return Err(TransferError::DegenerateVolume);
        }
        Ok(num / den)
    }

    /// Expectation under the infinite-volume Gibbs law: the propagated
    /// boundary weight is replaced by the right Perron vector.
    pub fn infinite_volume_expectation<F: Fn(&WindowConfig) -> f64>(
        &self,
        l: usize,
        f: F,
    ) -> Result<f64, TransferError> {
        let num = self.window_vector(l, f).dot(&self.eigen.right);
        let den = self.window_vector(l, |_| 1.0).dot(&self.eigen.right);
        if den <= 0.0 {
            return Err(TransferError::DegenerateVolume);
        }
        Ok(num / den)
    }

    /// Convergence of finite-volume expectations to the infinite-volume
    /// limit over the given volumes.
    pub fn thermodynamic_curve<F: Fn(&WindowConfig) -> f64>(
        &self,
        l: usize,
        f: F,
        volumes: &[usize],
    ) -> Result<ThermoCurve, TransferError> {
        let limit = self.infinite_volume_expectation(l, &f)?;
        let mut rows = Vec::new();
        for &n in volumes {
            if l >= n {
                continue;
            }
            let e = self.finite_volume_expectation(n, l, &f)?;
            rows.push(ThermoRow {
                n,
                expectation: e,
                gap: (e - limit).abs(),
            });
        }
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.gap > 1e-13)
            .map(|r| (r.n as f64, r.gap.ln()))
            .collect();
        let fit = stats::least_squares(&points).ok();
        let fitted_ratio = fit.as_ref().map(|f| f.slope.exp());
        let dense = dense_moduli(&self.kernel);
        let dense_ratio = if dense.len() > 1 {
            dense[1] / dense[0]
        } else {
            0.0
        };
        Ok(ThermoCurve {
            limit,
            rows,
            fit,
            fitted_ratio,
            dense_ratio,
            power_gap_estimate: self.eigen.gap_estimate,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermoRow {
    pub n: usize,
    pub expectation: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermoCurve {
    pub limit: f64,
    pub rows: Vec<ThermoRow>,
    /// Least squares of `ln gap` on `n` over rows above the float noise
    /// floor.
    pub fit: Option<FitResult>,
    /// `exp(slope)`: the measured per-volume contraction.
    pub fitted_ratio: Option<f64>,
    /// `|lambda_2| / lambda` from the dense eigensolver.
    pub dense_ratio: f64,
    pub power_gap_estimate: f64,
}

/// Expectation of a window observable in volume `n` by full enumeration of
/// the configuration space.  Reference implementation for the transfer
/// formulas; exponential cost, toy sizes only.
pub fn brute_force_expectation<F: Fn(&WindowConfig) -> f64>(
    spec: &GibbsSpec,
    n: usize,
    l: usize,
    f: F,
) -> Result<f64, TransferError> {
    if n == 0 || l >= n {
        return Err(TransferError::VolumeTooSmall { n, l });
    }
    let s = spec.slice_states();
    let mut radices = vec![spec.left_states()];
    for i in 0..n {
        radices.push(s);
        if i + 1 < n {
            radices.push(spec.rung_states());
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut slices = vec![0usize; n];
    let mut rungs = vec![0usize; n.saturating_sub(1)];
    odometer(&radices, |digits| {
        let left = digits[0];
        for i in 0..n {
            slices[i] = digits[1 + 2 * i];
        }
        for i in 0..n - 1 {
            rungs[i] = digits[2 + 2 * i];
        }
        let mut w = spec.left_weight(left, slices[0]);
        for i in 0..n - 1 {
            w *= spec.middle_weight(slices[i], rungs[i], slices[i + 1]);
        }
        w *= spec.g_right(slices[n - 1]);
        if w == 0.0 {
            return;
        }
        den += w;
        num += w
            * f(&WindowConfig {
                left,
                slices: &slices[..l],
                rungs: &rungs[..l],
            });
    });
    if den <= 0.0 {
        return Err(TransferError::DegenerateVolume);
    }
    Ok(num / den)
}

/// Worst mismatch between closed-form region conditionals and brute-force
/// conditionals over a grid of regions (interior slices, single rungs,
/// rung-slice pairs, prefix windows) and every blanket assignment of the
/// volume-`n` system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DlrReport {
    pub max_residual: f64,
    pub cases: usize,
}

pub fn dlr_check(spec: &GibbsSpec, n: usize) -> Result<DlrReport, TransferError> {
    if n < 2 {
        return Err(TransferError::VolumeTooSmall { n, l: 1 });
    }
    let s = spec.slice_states();
    let r = spec.rung_states();

    // enumerate all configurations once, keeping weights
    let mut radices = vec![spec.left_states()];
    for i in 0..n {
        radices.push(s);
        if i + 1 < n {
            radices.push(r);
        }
    }
    struct Row {
        left: usize,
        slices: Vec<usize>,
        rungs: Vec<usize>,
        weight: f64,
    }
    let mut rows: Vec<Row> = Vec::new();
    odometer(&radices, |digits| {
        let left = digits[0];
        let slices: Vec<usize> = (0..n).map(|i| digits[1 + 2 * i]).collect();
        let rungs: Vec<usize> = (0..n - 1).map(|i| digits[2 + 2 * i]).collect();
        let mut w = spec.left_weight(left, slices[0]);
        for i in 0..n - 1 {
            w *= spec.middle_weight(slices[i], rungs[i], slices[i + 1]);
        }
        w *= spec.g_right(slices[n - 1]);
        if w > 0.0 {
            rows.push(Row {
                left,
                slices,
                rungs,
                weight: w,
            });
        }
    });
    if rows.is_empty() {
        return Err(TransferError::DegenerateVolume);
    }

    let mut max_residual = 0.0f64;
    let mut cases = 0usize;

    // single interior slice i (1-based 2..=n-1): blanket is
    // (s_{i-1}, r_{i-1}, r_i, s_{i+1})
    for i in 2..n {
        let idx = i - 1; // 0-based slice index
        // group rows by (everything except s_i); here the Markov blanket
        // suffices because the closed form only involves it
        let mut by_blanket: std::collections::HashMap<(usize, usize, usize, usize), Vec<f64>> =
            std::collections::HashMap::new();
        for row in &rows {
            let key = (
                row.slices[idx - 1],
                row.rungs[idx - 1],
                row.rungs[idx],
                row.slices[idx + 1],
            );
            let bucket = by_blanket.entry(key).or_insert_with(|| vec![0.0; s]);
            bucket[row.slices[idx]] += row.weight;
        }
        for ((s_prev, r_prev, r_next, s_next), bucket) in by_blanket {
            let total: f64 = bucket.iter().sum();
            // closed form from the two middle factors touching s_i
            let local: Vec<f64> = (0..s)
                .map(|sigma| {
                    spec.middle_weight(s_prev, r_prev, sigma)
                        * spec.middle_weight(sigma, r_next, s_next)
                })
                .collect();
            let local_total: f64 = local.iter().sum();
            for sigma in 0..s {
                let brute = bucket[sigma] / total;
                let kernel = local[sigma] / local_total;
                max_residual = max_residual.max((brute - kernel).abs());
                cases += 1;
            }
        }
    }

    // single rung i (1-based 1..=n-1): blanket is (s_i, s_{i+1})
    for i in 1..n {
        let idx = i - 1;
        let mut by_blanket: std::collections::HashMap<(usize, usize), Vec<f64>> =
            std::collections::HashMap::new();
        for row in &rows {
            let key = (row.slices[idx], row.slices[idx + 1]);
            let bucket = by_blanket.entry(key).or_insert_with(|| vec![0.0; r]);
            bucket[row.rungs[idx]] += row.weight;
        }
        for ((s_lo, s_hi), bucket) in by_blanket {
            let total: f64 = bucket.iter().sum();
            let local: Vec<f64> = (0..r)
                .map(|rho| spec.middle_weight(s_lo, rho, s_hi))
                .collect();
            let local_total: f64 = local.iter().sum();
            for rho in 0..r {
                let brute = bucket[rho] / total;
                let kernel = local[rho] / local_total;
                max_residual = max_residual.max((brute - kernel).abs());
                cases += 1;
            }
        }
    }

    // prefix window [0,m]: the cylinder (left, s_1..s_m, r_1..r_m) given
    // its only blanket variable s_{m+1}
    for m in 1..n {
        let mut by_blanket: std::collections::HashMap<
            usize,
            std::collections::HashMap<(usize, Vec<usize>, Vec<usize>), f64>,
        > = std::collections::HashMap::new();
        for row in &rows {
            let atom = (
                row.left,
                row.slices[..m].to_vec(),
                row.rungs[..m].to_vec(),
            );
            *by_blanket
                .entry(row.slices[m])
                .or_default()
                .entry(atom)
                .or_insert(0.0) += row.weight;
        }
        let mut radices = vec![spec.left_states()];
        radices.extend(std::iter::repeat(s).take(m));
        radices.extend(std::iter::repeat(r).take(m));
        for (s_next, bucket) in by_blanket {
            let total: f64 = bucket.values().sum();
            let mut atoms: Vec<((usize, Vec<usize>, Vec<usize>), f64)> = Vec::new();
            odometer(&radices, |digits| {
                let left = digits[0];
                let slices = digits[1..1 + m].to_vec();
                let rungs = digits[1 + m..1 + 2 * m].to_vec();
                let mut w = spec.left_weight(left, slices[0]);
                for i in 0..m {
                    let next = if i + 1 < m { slices[i + 1] } else { s_next };
                    w *= spec.middle_weight(slices[i], rungs[i], next);
                }
                atoms.push(((left, slices, rungs), w));
            });
            let local_total: f64 = atoms.iter().map(|(_, w)| w).sum();
            for (atom, w) in atoms {
                let brute = bucket.get(&atom).copied().unwrap_or(0.0) / total;
                let kernel = w / local_total;
                max_residual = max_residual.max((brute - kernel).abs());
                cases += 1;
            }
        }
    }

    // pair region (r_i, s_{i+1}) for i in 1..=n-2: blanket is
    // (s_i, r_{i+1}, s_{i+2})
    for i in 1..n.saturating_sub(1) {
        let idx = i - 1;
        let mut by_blanket: std::collections::HashMap<(usize, usize, usize), Vec<f64>> =
            std::collections::HashMap::new();
        for row in &rows {
            let key = (row.slices[idx], row.rungs[idx + 1], row.slices[idx + 2]);
            let bucket = by_blanket
                .entry(key)
                .or_insert_with(|| vec![0.0; r * s]);
            bucket[row.rungs[idx] * s + row.slices[idx + 1]] += row.weight;
        }
        for ((s_lo, r_next, s_hi), bucket) in by_blanket {
            let total: f64 = bucket.iter().sum();
            let mut local = vec![0.0; r * s];
            for rho in 0..r {
                for sigma in 0..s {
                    local[rho * s + sigma] = spec.middle_weight(s_lo, rho, sigma)
                        * spec.middle_weight(sigma, r_next, s_hi);
                }
            }
            let local_total: f64 = local.iter().sum();
            for j in 0..r * s {
                let brute = bucket[j] / total;
                let kernel = local[j] / local_total;
                max_residual = max_residual.max((brute - kernel).abs());
                cases += 1;
            }
        }
    }

    Ok(DlrReport {
        max_residual,
        cases,
    })
}

/// Named toy specifications used by tests and the command-line driver.
pub fn demo_specs() -> Vec<(String, GibbsSpec)> {
    use rand::Rng;
    let mut out = Vec::new();

    let zeros = |s: usize, r: usize| vec![vec![vec![Some(0.0); s]; r]; s];

    // uniform couplings: kernel of all ones (2 states) and all twos (3
    // states, 2 rungs)
    out.push((
        "uniform-2x1".to_string(),
        GibbsSpec::new(zeros(2, 1), vec![vec![Some(0.0); 2]], vec![1.0; 2]).unwrap(),
    ));
    out.push((
        "uniform-3x2".to_string(),
        GibbsSpec::new(zeros(3, 2), vec![vec![Some(0.0); 3]; 2], vec![1.0; 3]).unwrap(),
    ));

    // energies chosen so the kernel is exactly [[2, 1], [1, 1]]
    let ln2 = 2.0f64.ln();
    out.push((
        "golden-2x1".to_string(),
        GibbsSpec::new(
            vec![
                vec![vec![Some(-ln2), Some(0.0)]],
                vec![vec![Some(0.0), Some(0.0)]],
            ],
            vec![vec![Some(0.0), Some(0.5)]],
            vec![1.0, 2.0],
        )
        .unwrap(),
    ));

    // diagonal barrier: staying in the same slice state is cheap, switching
    // costs 2; symmetric kernel with a small spectral gap
    let barrier = |s: usize, r: usize| {
        let h: Vec<Vec<Vec<Option<f64>>>> = (0..s)
            .map(|i| {
                (0..r)
                    .map(|rho| {
                        (0..s)
                            .map(|j| Some(if i == j { 0.1 * rho as f64 } else { 2.0 + 0.1 * rho as f64 }))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        h
    };
    // boundary terms vary with the slice state so that window observables
    // overlap the subleading eigenspace and the volume curve actually moves
    out.push((
        "barrier-3x2".to_string(),
        GibbsSpec::new(
            barrier(3, 2),
            vec![
                vec![Some(0.0), Some(0.2), Some(0.4)],
                vec![Some(0.3), Some(0.1), Some(0.0)],
            ],
            vec![1.6, 1.0, 0.7],
        )
        .unwrap(),
    ));

    // frozen pseudorandom energies in [-1, 1]
    fn random_h(
        rng: &mut impl Rng,
        s: usize,
        r: usize,
    ) -> Vec<Vec<Vec<Option<f64>>>> {
        (0..s)
            .map(|_| {
                (0..r)
                    .map(|_| (0..s).map(|_| Some(rng.gen_range(-1.0..1.0))).collect())
                    .collect()
            })
            .collect()
    }
    let mut rng = crate::seed::replica_rng(0x7AB1E5, 0);
    let h = random_h(&mut rng, 4, 3);
    let hl: Vec<Vec<Option<f64>>> = (0..2)
        .map(|_| (0..4).map(|_| Some(rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let gr: Vec<f64> = (0..4).map(|_| rng.gen_range(0.5..2.0)).collect();
    out.push(("random-4x3".to_string(), GibbsSpec::new(h, hl, gr).unwrap()));

    let h = random_h(&mut rng, 2, 2);
    out.push((
        "random-2x2".to_string(),
        GibbsSpec::new(h, vec![vec![Some(0.0); 2]], vec![1.0, 1.0]).unwrap(),
    ));

    out
}
