//! Statistics toolkit shared by the Monte Carlo experiments.
//!
//! Conventions: total variation is half the l1 distance; proportion
//! confidence intervals use Wilson's score at 95%; log-linear fits are
//! ordinary least squares on log counts over bins with at least `min_count`
//! observations; two-sample Kolmogorov-Smirnov uses the asymptotic critical
//! value `c(alpha) * sqrt((n + m) / (n * m))`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("distributions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("fit needs at least 2 usable bins, got {0}")]
    TooFewBins(usize),
    #[error("fit abscissas are degenerate (zero variance)")]
    DegenerateAbscissa,
    #[error("empty sample")]
    EmptySample,
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
}

/// Total variation distance `0.5 * sum |mu - nu|` between two finite
/// distributions given as aligned mass vectors.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> Result<f64, StatsError> {
    if mu.len() != nu.len() {
        return Err(StatsError::LengthMismatch(mu.len(), nu.len()));
    }
    Ok(0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ci {
    pub lo: f64,
    pub hi: f64,
}

impl Ci {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Ci) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Wilson score interval for `successes` out of `n` at 95% confidence.
pub fn wilson_ci(successes: u64, n: u64) -> Result<Ci, StatsError> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    let z = normal_quantile(0.975)?;
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the interval ends are exact at the boundary counts
    Ok(Ci {
        lo: if successes == 0 {
            0.0
        } else {
            (center - half).max(0.0)
        },
        hi: if successes as f64 == n {
            1.0
        } else {
            (center + half).min(1.0)
        },
    })
}

/// Least squares line fit with goodness of fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    /// Abscissas of the points that entered the fit.
    pub bins_used: Vec<f64>,
}

/// Ordinary least squares of `y` on `x`.
pub fn least_squares(points: &[(f64, f64)]) -> Result<FitResult, StatsError> {
    if points.len() < 2 {
        return Err(StatsError::TooFewBins(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    if sxx == 0.0 {
        return Err(StatsError::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = points
        .iter()
        .map(|&(x, y)| y - (intercept + slope * x))
        .collect();
    let ss_res = residuals.iter().map(|r| r * r).sum::<f64>();
    let ss_tot = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum::<f64>();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        residuals,
        bins_used: points.iter().map(|p| p.0).collect(),
    })
}

/// Least squares of `ln count` on the bin abscissa, using only bins with at
/// least `min_count` observations.
pub fn loglinear_fit(bins: &[(f64, u64)], min_count: u64) -> Result<FitResult, StatsError> {
    let points: Vec<(f64, f64)> = bins
        .iter()
        .filter(|&&(_, c)| c >= min_count.max(1))
        .map(|&(x, c)| (x, (c as f64).ln()))
        .collect();
    least_squares(&points)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&p) || p == 0.0 || p == 1.0 {
        return Err(StatsError::BadProbability(p));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(p))
}

/// Tightens a `base_z` sigma band so that the familywise false alarm rate
/// over `m` two-sided comparisons stays at the single-test level of
/// `base_z`: solves `Phi(-z') = Phi(-base_z) / m`.
pub fn corrected_z(base_z: f64, m: usize) -> Result<f64, StatsError> {
    if m <= 1 {
        return Ok(base_z);
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let tail = n.cdf(-base_z) / m as f64;
    normal_quantile(1.0 - tail)
}

/// Mean and standard deviation of a sample (denominator `n - 1`).
pub fn mean_sd(xs: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Bootstrap standard error of a statistic over `n_items` indexed items.
/// The statistic receives a resampled index multiset; resampling is driven
/// by the given seed, independent of everything else.
pub fn bootstrap_se<F: Fn(&[usize]) -> f64>(
    n_items: usize,
    resamples: usize,
    seed: u64,
    statistic: F,
) -> Result<(f64, f64), StatsError> {
    use rand::Rng;
    if n_items == 0 {
        return Err(StatsError::EmptySample);
    }
    let mut stats = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n_items];
    for b in 0..resamples {
        let mut rng = crate::seed::replica_rng(seed, b as u64);
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..n_items);
        }
        stats.push(statistic(&idx));
    }
    mean_sd(&stats)
}

/// Percentile of a sample by linear interpolation (R-7).  `q` in `[0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_n - G_m|`.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample KS critical value at level `alpha`:
/// `sqrt(-ln(alpha / 2) / 2) * sqrt((n + m) / (n m))`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> Result<f64, StatsError> {
    if n == 0 || m == 0 {
        return Err(StatsError::EmptySample);
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(StatsError::BadProbability(alpha));
    }
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    Ok(c * (((n + m) as f64) / ((n * m) as f64)).sqrt())
}

/// True when the sequence never increases by more than `tol`.
pub fn nonincreasing(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tv_basic() {
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        // half the l1 distance
        assert_relative_eq!(
            tv_distance(&[0.7, 0.3], &[0.4, 0.6]).unwrap(),
            0.3,
            max_relative = 1e-15
        );
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn wilson_matches_hand_computation() {
        // k=8, n=10, z=1.959964: center and half-width worked out by hand
        let ci = wilson_ci(8, 10).unwrap();
        assert_relative_eq!(ci.lo, 0.4901625, max_relative = 1e-5);
        assert_relative_eq!(ci.hi, 0.9433178, max_relative = 1e-5);
        // degenerate ends stay inside [0, 1]
        let full = wilson_ci(10, 10).unwrap();
        assert!(full.hi <= 1.0 && full.lo > 0.5);
        let empty = wilson_ci(0, 10).unwrap();
        assert!(empty.lo == 0.0 && empty.hi < 0.5);
    }

    #[test]
    fn least_squares_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let fit = least_squares(&pts).unwrap();
        assert_relative_eq!(fit.slope, -2.0, max_relative = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0, max_relative = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, max_relative = 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn least_squares_hand_checked_noisy_case() {
        // three points (0,0), (1,1), (2,1): slope 1/2, intercept 1/6
        let fit = least_squares(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert_relative_eq!(fit.slope, 0.5, max_relative = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0 / 6.0, max_relative = 1e-12);
        // R^2 = 1 - (1/6)/(2/3) = 3/4
        assert_relative_eq!(fit.r_squared, 0.75, max_relative = 1e-12);
    }

    #[test]
    fn loglinear_fit_filters_thin_bins() {
        let bins = vec![(0.0, 1000u64), (1.0, 368), (2.0, 135), (3.0, 5)];
        let fit = loglinear_fit(&bins, 30).unwrap();
        assert_eq!(fit.bins_used, vec![0.0, 1.0, 2.0]);
        // counts follow exp(-x) closely
        assert_relative_eq!(fit.slope, -1.0, max_relative = 0.01);
        assert!(fit.r_squared > 0.999);
        assert!(matches!(
            loglinear_fit(&[(0.0, 10)], 30),
            Err(StatsError::TooFewBins(_))
        ));
        assert!(matches!(
            least_squares(&[(1.0, 0.0), (1.0, 5.0)]),
            Err(StatsError::DegenerateAbscissa)
        ));
    }

    #[test]
    fn normal_quantile_reference_points() {
        assert_relative_eq!(normal_quantile(0.975).unwrap(), 1.959964, max_relative = 1e-6);
        assert_relative_eq!(normal_quantile(0.5).unwrap(), 0.0, epsilon = 1e-12);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn corrected_z_grows_with_test_count() {
        let base = 4.0;
        let z1 = corrected_z(base, 1).unwrap();
        let z14 = corrected_z(base, 14).unwrap();
        assert_eq!(z1, base);
        assert!(z14 > base && z14 < base + 1.0);
        // inverse property: Phi(-z14) * 14 == Phi(-4)
        let n = Normal::new(0.0, 1.0).unwrap();
        assert_relative_eq!(n.cdf(-z14) * 14.0, n.cdf(-base), max_relative = 1e-9);
    }

    #[test]
    fn ks_statistic_hand_cases() {
        // identical samples: D = 0
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        // disjoint supports: D = 1
        assert_eq!(ks_statistic(&[0.0, 0.1], &[5.0, 6.0]).unwrap(), 1.0);
        // hand case: x = {1, 3}, y = {2, 4}: D = 1/2
        assert_relative_eq!(
            ks_statistic(&[1.0, 3.0], &[2.0, 4.0]).unwrap(),
            0.5,
            max_relative = 1e-15
        );
        // ties across samples
        assert_relative_eq!(
            ks_statistic(&[1.0, 2.0], &[2.0, 3.0]).unwrap(),
            0.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn ks_critical_reference_value() {
        // c(0.05) = 1.3581, n = m = 1000
        let crit = ks_critical(1000, 1000, 0.05).unwrap();
        assert_relative_eq!(crit, 1.3581 * (2.0f64 / 1000.0).sqrt(), max_relative = 1e-4);
    }

    #[test]
    fn bootstrap_se_of_mean_matches_formula() {
        // N(0,1)-ish fixed sample; bootstrap SE of the mean ~ sd/sqrt(n)
        let xs: Vec<f64> = (0..400)
            .map(|i| ((i * 2654435761u64 as usize) % 1000) as f64 / 1000.0)
            .collect();
        let (_, sd) = mean_sd(&xs).unwrap();
        let expected = sd / (xs.len() as f64).sqrt();
        let (mean_b, se) = bootstrap_se(xs.len(), 600, 1234, |idx| {
            idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64
        })
        .unwrap();
        assert_relative_eq!(se, expected, max_relative = 0.15);
        let (true_mean, _) = mean_sd(&xs).unwrap();
        assert_relative_eq!(mean_b, true_mean, epsilon = 4.0 * expected);
        // deterministic in the seed
        let (m2, se2) = bootstrap_se(xs.len(), 600, 1234, |idx| {
            idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64
        })
        .unwrap();
        assert_eq!(mean_b, m2);
        assert_eq!(se, se2);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&xs, 1.0).unwrap(), 4.0);
        assert_relative_eq!(quantile(&xs, 0.5).unwrap(), 2.5, max_relative = 1e-15);
        assert_relative_eq!(quantile(&xs, 0.25).unwrap(), 1.75, max_relative = 1e-15);
    }

    #[test]
    fn nonincreasing_with_tolerance() {
        assert!(nonincreasing(&[3.0, 2.0, 2.0, 1.0], 0.0));
        assert!(!nonincreasing(&[1.0, 2.0], 0.5));
        assert!(nonincreasing(&[1.0, 1.0 + 1e-13], 1e-12));
    }
}
