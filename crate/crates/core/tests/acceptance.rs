//! Acceptance gate: one test per criterion (AC1..AC12), each printing a
//! single PASS/FAIL line.  Heavy Monte Carlo fixtures are computed once and
//! shared between criteria; fixtures that must be independent use distinct
//! master seeds.

use errw_lab::env_estimate::{
    decay_profile, log_ratio_tail, sample_environments, EnvironmentSample,
};
use errw_lab::harness::equilibrium::equilibrium_experiment;
use errw_lab::harness::{decay_verdicts, log_ratio_verdicts};
use errw_lab::harness::finite_volume::compare_samples;
use errw_lab::harness::mixture::{conditional_mixture_check, mixture_check};
use errw_lab::harness::range::range_from_checkpoints;
use errw_lab::harness::report::{all_passed, render, Verdict};
use errw_lab::harness::tails::tails_from_checkpoints;
use errw_lab::harness::{level_checkpoints, LevelCheckpoints};
use errw_lab::ladder::{Depth, EdgeId, FiniteTree, Ladder, VertexId};
use errw_lab::rwre::{
    detailed_balance_residual, quenched_convergence_check, random_environment,
    reversibility_residual,
};
use errw_lab::seed::{replica_rng, stage_seed};
use errw_lab::stats::quantile;
use errw_lab::transfer::{
    brute_force_expectation, demo_specs, dlr_check, TransferSystem, WindowConfig,
};
use errw_lab::walk::{exchangeability_check, PathRecord};
use num::BigRational;
use once_cell::sync::Lazy;
use std::sync::Arc;

fn segment_ladder(depth: u32) -> Arc<Ladder> {
    Arc::new(Ladder::with_defaults(FiniteTree::segment(2).unwrap(), Depth::Finite(depth)).unwrap())
}

fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn conclude(id: &str, verdicts: &[Verdict]) {
    let ok = all_passed(verdicts);
    let summary = verdicts
        .iter()
        .map(|v| v.detail.as_str())
        .collect::<Vec<_>>()
        .join("; ");
    println!("{id} {}: {summary}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} failed:\n{}", render(verdicts));
}

/// Depth-30 localization run shared by the tail and range criteria.
static LOCALIZATION: Lazy<LevelCheckpoints> = Lazy::new(|| {
    level_checkpoints(
        &segment_ladder(30),
        &rational(2, 1),
        &[1_000, 10_000, 100_000],
        10_000,
        0x00A6_1001,
    )
    .unwrap()
});

/// Depth-20 environment sample shared by the decay, log-ratio, and
/// finite-volume criteria.
static DEEP_SAMPLE: Lazy<EnvironmentSample> = Lazy::new(|| {
    sample_environments(
        segment_ladder(20),
        &rational(2, 1),
        1_000_000,
        1_000,
        0x00A8_1001,
    )
    .unwrap()
});

/// Depth-10 sample for the finite-volume comparison; independent master
/// seed so the two-sample test sees independent draws.
static SHALLOW_SAMPLE: Lazy<EnvironmentSample> = Lazy::new(|| {
    sample_environments(
        segment_ladder(10),
        &rational(2, 1),
        1_000_000,
        1_000,
        0x00A0_1001,
    )
    .unwrap()
});

/// Square-ladder sample shared by the mixture criteria.
static SQUARE_SAMPLE: Lazy<EnvironmentSample> = Lazy::new(|| {
    sample_environments(
        segment_ladder(1),
        &rational(1, 1),
        1_000_000,
        1_000,
        0x00A4_1001,
    )
    .unwrap()
});

#[test]
fn ac01_partial_exchangeability() {
    let mut verdicts = Vec::new();
    for depth in [1u32, 2] {
        for a in [rational(1, 1), rational(2, 1), rational(19, 25)] {
            let ladder = segment_ladder(depth);
            let report = exchangeability_check(&ladder, &a, 8, 1_000_000).unwrap();
            verdicts.push(Verdict::new(
                "AC1",
                report.all_equal() && report.total_paths > 0,
                format!(
                    "depth {depth}, a={a}: {} paths in {} groups, {} violations",
                    report.total_paths,
                    report.groups,
                    report.violations.len()
                ),
            ));
        }
    }
    conclude("AC1", &verdicts);
}

#[test]
fn ac02_detailed_balance_and_reversibility() {
    let ladder = segment_ladder(3);
    let seed = stage_seed(0x00A2_1001, "environments");
    let mut max_db = 0.0f64;
    let mut max_rev = 0.0f64;
    for i in 0..100 {
        let mut rng = replica_rng(seed, i);
        let env = random_environment(Arc::clone(&ladder), &mut rng).unwrap();
        max_db = max_db.max(detailed_balance_residual(&env).unwrap());
        max_rev = max_rev.max(reversibility_residual(&env, 6).unwrap());
    }
    let verdicts = vec![
        Verdict::new(
            "AC2",
            max_db < 1e-12,
            format!("detailed balance residual {max_db:.2e} < 1e-12 over 100 environments"),
        ),
        Verdict::new(
            "AC2",
            max_rev < 1e-12,
            format!("reversibility residual {max_rev:.2e} < 1e-12 for t <= 6"),
        ),
    ];
    conclude("AC2", &verdicts);
}

#[test]
fn ac03_quenched_convergence() {
    let ladder = segment_ladder(3);
    let seed = stage_seed(0x00A3_1001, "environments");
    let mut worst_t = 0u64;
    let mut support = true;
    for i in 0..25 {
        let mut rng = replica_rng(seed, i);
        let env = random_environment(Arc::clone(&ladder), &mut rng).unwrap();
        let report = quenched_convergence_check(&env, 1e-8, 200_000).unwrap();
        worst_t = worst_t.max(report.t_star);
        support &= report.parity_support_exact;
    }
    let verdicts = vec![
        Verdict::new(
            "AC3",
            true,
            format!("25 environments reach TV < 1e-8 on both parities (worst t* {worst_t})"),
        ),
        Verdict::new(
            "AC3",
            support,
            "parity support exact at every step".to_string(),
        ),
    ];
    conclude("AC3", &verdicts);
}

#[test]
fn ac04_mixture_identity() {
    let report = mixture_check(&SQUARE_SAMPLE, &rational(1, 1), 3).unwrap();
    let mut verdicts = report.verdicts.clone();
    verdicts.push(Verdict::new(
        "AC4",
        report.rows.len() == 14,
        format!("{} paths of length <= 3 enumerated", report.rows.len()),
    ));
    let half = report.rows.iter().find(|r| r.len == 1).unwrap();
    let third = report
        .rows
        .iter()
        .find(|r| r.len == 2 && r.path[0] == r.path[2])
        .unwrap();
    verdicts.push(Verdict::new(
        "AC4",
        half.exact_rational == "1/2" && third.exact_rational == "1/3",
        format!(
            "frozen exact values: one step {} and immediate return {}",
            half.exact_rational, third.exact_rational
        ),
    ));
    conclude("AC4", &verdicts);
}

#[test]
fn ac05_conditional_mixture() {
    let ladder = SQUARE_SAMPLE.environments[0].ladder();
    let prefix = PathRecord::new(vec![ladder.start(), VertexId(1)]);
    let report = conditional_mixture_check(&SQUARE_SAMPLE, &rational(1, 1), &prefix, 2).unwrap();
    let mut verdicts = report.verdicts.clone();
    verdicts.push(Verdict::new(
        "AC5",
        report.rows.len() == 6,
        format!("{} continuations of length <= 2", report.rows.len()),
    ));
    conclude("AC5", &verdicts);
}

#[test]
fn ac06_localization_tails() {
    // checkpoints are sorted: indices 1 and 2 hold t = 1e4 and 1e5
    let report = tails_from_checkpoints(&LOCALIZATION, &[1, 2]).unwrap();
    conclude("AC6", &report.verdicts);
}

#[test]
fn ac07_logarithmic_range() {
    let report = range_from_checkpoints(&LOCALIZATION, &[0, 1, 2]).unwrap();
    conclude("AC7", &report.verdicts);
}

#[test]
fn ac08_environment_decay() {
    let profile = decay_profile(
        &DEEP_SAMPLE,
        30,
        200,
        stage_seed(DEEP_SAMPLE.meta.master_seed, "decay-ci"),
    )
    .unwrap();
    let verdicts = decay_verdicts(&profile, 3, 15);
    conclude("AC8", &verdicts);
}

#[test]
fn ac09_log_ratio_tails() {
    let ladder = DEEP_SAMPLE.environments[0].ladder();
    let (e, f) = (ladder.rung_id(1, 0), ladder.rung_id(2, 0));
    // thresholds from survival quantiles of the observed ratios, so the
    // grid spans the tail regardless of its scale
    let mut values: Vec<f64> = DEEP_SAMPLE
        .environments
        .iter()
        .filter_map(|env| {
            let (x, y) = (env.weight(e), env.weight(f));
            (x > 0.0 && y > 0.0).then(|| (x / y).ln().abs())
        })
        .collect();
    values.sort_by(|a, b| a.total_cmp(b));
    let targets = [0.5, 0.4, 0.32, 0.25, 0.2, 0.16, 0.125, 0.1, 0.08, 0.063];
    let thresholds: Vec<f64> = targets
        .iter()
        .map(|&s| quantile(&values, 1.0 - s).unwrap())
        .collect();
    let tail = log_ratio_tail(&DEEP_SAMPLE, e, f, &thresholds, 30).unwrap();
    let verdicts = log_ratio_verdicts(&tail);
    conclude("AC9", &verdicts);
}

#[test]
fn ac10_finite_volume_convergence() {
    let report = compare_samples(&SHALLOW_SAMPLE, &DEEP_SAMPLE, 2, 0.05).unwrap();
    conclude("AC10", &report.verdicts);
}

#[test]
fn ac11_transfer_gibbs_algebra() {
    let mut verdicts = Vec::new();
    let mut max_resid = 0.0f64;
    let mut max_brute = 0.0f64;
    let mut max_dlr = 0.0f64;
    let mut max_consistency = 0.0f64;
    for (_name, spec) in demo_specs() {
        let sys = TransferSystem::new(spec.clone()).unwrap();
        max_resid = max_resid
            .max(sys.eigen().right_residual)
            .max(sys.eigen().left_residual);

        let f = |w: &WindowConfig| (w.slices[0] == 0) as u8 as f64;
        let left_f = |w: &WindowConfig| (w.left == 0) as u8 as f64;
        for n in 1..=4usize {
            for (l, obs) in [(0usize, &left_f as &dyn Fn(&WindowConfig) -> f64), (1, &f)] {
                if l >= n {
                    continue;
                }
                let formula = sys.finite_volume_expectation(n, l, obs).unwrap();
                let brute = brute_force_expectation(&spec, n, l, obs).unwrap();
                max_brute = max_brute.max((formula - brute).abs());
            }
        }
        for n in [2usize, 3, 4] {
            max_dlr = max_dlr.max(dlr_check(&spec, n).unwrap().max_residual);
        }
        // nested-window consistency: the same observable evaluated through
        // windows [0,1] and [0,2]
        let inf1 = sys.infinite_volume_expectation(1, f).unwrap();
        let inf2 = sys.infinite_volume_expectation(2, f).unwrap();
        max_consistency = max_consistency.max((inf1 - inf2).abs());
        let fin1 = sys.finite_volume_expectation(6, 1, f).unwrap();
        let fin2 = sys.finite_volume_expectation(6, 2, f).unwrap();
        max_consistency = max_consistency.max((fin1 - fin2).abs());
    }
    verdicts.push(Verdict::new(
        "AC11",
        max_resid < 1e-12,
        format!("eigen residuals {max_resid:.2e} < 1e-12 on all toys"),
    ));
    verdicts.push(Verdict::new(
        "AC11",
        max_brute < 1e-10,
        format!("transfer formulas match brute-force enumeration within {max_brute:.2e}"),
    ));
    verdicts.push(Verdict::new(
        "AC11",
        max_dlr < 1e-12,
        format!("DLR conditionals match within {max_dlr:.2e}"),
    ));
    verdicts.push(Verdict::new(
        "AC11",
        max_consistency < 1e-12,
        format!("nested-window volume consistency within {max_consistency:.2e}"),
    ));

    for name in ["golden-2x1", "barrier-3x2"] {
        let spec = demo_specs()
            .into_iter()
            .find(|(n, _)| n.as_str() == name)
            .unwrap()
            .1;
        let sys = TransferSystem::new(spec).unwrap();
        let f = |w: &WindowConfig| (w.slices[0] == 0) as u8 as f64;
        let volumes: Vec<usize> = (2..=40).collect();
        let curve = sys.thermodynamic_curve(1, f, &volumes).unwrap();
        let fitted = curve.fitted_ratio.unwrap_or(f64::NAN);
        verdicts.push(Verdict::new(
            "AC11",
            (fitted - curve.dense_ratio).abs() <= 0.1 * curve.dense_ratio,
            format!(
                "{name}: thermodynamic decay ratio {fitted:.5} within 10% of dense {:.5}",
                curve.dense_ratio
            ),
        ));
    }
    conclude("AC11", &verdicts);
}

#[test]
fn ac12_determinism_across_parallelism() {
    fn artifacts() -> String {
        let mut out = String::new();
        let ladder = segment_ladder(8);
        let a2 = rational(2, 1);
        let samples = level_checkpoints(&ladder, &a2, &[200, 400], 300, 0xD_0001).unwrap();
        let tails = tails_from_checkpoints(&samples, &[0, 1]).unwrap();
        out += &serde_json::to_string(&tails.curves).unwrap();
        let range = range_from_checkpoints(&samples, &[0, 1]).unwrap();
        out += &serde_json::to_string(&range.rows).unwrap();
        let eq = equilibrium_experiment(&segment_ladder(6), &a2, &[100, 300], 300, 0xD_0002)
            .unwrap();
        out += &serde_json::to_string(&eq).unwrap();

        let deep = sample_environments(segment_ladder(6), &a2, 100_000, 150, 0xD_0003).unwrap();
        let profile = decay_profile(&deep, 10, 50, stage_seed(0xD_0003, "decay-ci")).unwrap();
        out += &serde_json::to_string(&profile).unwrap();
        let tail = log_ratio_tail(
            &deep,
            EdgeId(3),
            EdgeId(6),
            &[0.25, 0.5, 1.0],
            5,
        )
        .unwrap();
        out += &serde_json::to_string(&tail).unwrap();

        let square = sample_environments(segment_ladder(1), &rational(1, 1), 20_000, 200, 0xD_0004)
            .unwrap();
        let mix = mixture_check(&square, &rational(1, 1), 2).unwrap();
        out += &serde_json::to_string(&mix).unwrap();
        let shallow = sample_environments(segment_ladder(4), &a2, 50_000, 150, 0xD_0005).unwrap();
        let deeper = sample_environments(segment_ladder(6), &a2, 50_000, 150, 0xD_0006).unwrap();
        let fv = compare_samples(&shallow, &deeper, 1, 0.05).unwrap();
        out += &serde_json::to_string(&fv).unwrap();
        out
    }

    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(artifacts);
    let two = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap()
        .install(artifacts);
    let verdicts = vec![Verdict::new(
        "AC12",
        one == two,
        format!(
            "result files byte-identical at 1 and 2 threads ({} bytes)",
            one.len()
        ),
    )];
    conclude("AC12", &verdicts);
}
