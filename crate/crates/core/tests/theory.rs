use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seppnet::theory::{
    kappa, kappa_monte_carlo, omega_arma, process_constants, sparse_learning_rate, theory_report,
    variance_domination, empirical_re, RegKind, ReportOptions,
};
use seppnet::{make_design, simulate, BasisSet, DesignKind, DesignSpec, Execution, InfluenceModel, Saturation};

/// `P(X ≤ k)` by the plain pmf recurrence.
fn cdf_oracle(k: u32, lambda: f64) -> f64 {
    let mut p = (-lambda).exp();
    let mut total = p;
    for i in 1..=k {
        p *= lambda / f64::from(i);
        total += p;
    }
    total
}

#[test]
fn kappa_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let r = rng.random_range(0.01..40.0);
        let u = rng.random_range(1..=30);
        let f = cdf_oracle(u - 1, r);
        assert!((kappa(r, u) - f * (1.0 - f)).abs() < 1e-12, "r={r} u={u}");
    }
    assert!((kappa(1.8f64.exp(), 6) - 0.2466).abs() < 0.002);
}

#[test]
fn kappa_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..20 {
        let r = rng.random_range(0.5..20.0);
        let u = rng.random_range(1..=10);
        let est = kappa_monte_carlo(r, u, 1_000_000, 100 + i).unwrap();
        let k = kappa(r, u);
        // When every draw lands on one side the sample SE is 0; fall back to
        // the Bernoulli SE under the null, q(1−q)(1−2q)²/n.
        let q = 1.0 - cdf_oracle(u - 1, r);
        let null_se = (q * (1.0 - q) * (1.0 - 2.0 * q).powi(2) / 1e6).sqrt();
        let se = est.std_error.max(null_se);
        assert!((est.variance - k).abs() <= 3.0 * se, "r={r} u={u}: {} vs {k}", est.variance);
    }
}

#[test]
fn threshold_indicator_variance_is_dominated() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..20 {
        let lambda = rng.random_range(0.1..30.0);
        let u = rng.random_range(1..=15);
        let (y, clipped) = variance_domination(lambda, u, 1_000_000, 200 + i).unwrap();
        assert!(y.variance <= clipped.variance + 3.0 * clipped.std_error.hypot(y.std_error));
    }
}

#[test]
fn conditional_second_moment_exceeds_the_floor() {
    for (seed, m) in [(1u64, 2usize), (2, 3), (3, 5)] {
        let spec = DesignSpec::new(DesignKind::sparse(m), m, seed);
        let model = InfluenceModel::with_enclosing_bounds(
            DVector::from_element(m, -0.5),
            make_design(&spec).unwrap(),
            BasisSet::Geometric { alpha: 0.3 },
            Saturation::clip(4.0),
        )
        .unwrap();
        let path = simulate(&model, 60, seed).unwrap();
        let (process, _, _) = process_constants(&model).unwrap();
        let states = [1, 10, 30, 59];
        let est = empirical_re(&model, &path, &states, 20_000, 10, seed, Execution::Parallel).unwrap();
        for (eig, se) in est {
            assert!(eig >= process.omega - 3.0 * se, "{eig} < {}", process.omega);
        }
    }
}

#[test]
fn empirical_re_is_thread_independent() {
    let model = InfluenceModel::with_enclosing_bounds(
        DVector::zeros(2),
        DMatrix::from_row_slice(2, 2, &[0.1, -0.2, 0.05, 0.0]),
        BasisSet::Geometric { alpha: 0.5 },
        Saturation::clip(6.0),
    )
    .unwrap();
    let path = simulate(&model, 20, 5).unwrap();
    let a = empirical_re(&model, &path, &[3, 7, 19], 500, 5, 9, Execution::Parallel).unwrap();
    let b = empirical_re(&model, &path, &[3, 7, 19], 500, 5, 9, Execution::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_invariants_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..30 {
        let m = rng.random_range(2..=20);
        let basis = match i % 3 {
            0 => BasisSet::Geometric { alpha: rng.random_range(0.0..0.8) },
            1 => BasisSet::Lags { p: 1 },
            _ => BasisSet::Lags { p: 2 },
        };
        let spec = DesignSpec { basis_len: basis.len(), ..DesignSpec::new(DesignKind::sparse(m), m, i) };
        let model = InfluenceModel::with_enclosing_bounds(
            DVector::zeros(m),
            make_design(&spec).unwrap(),
            basis,
            Saturation::clip(rng.random_range(2.0..10.0)),
        )
        .unwrap();
        let report = theory_report(&model, RegKind::L1, m as f64, 400, &ReportOptions::default()).unwrap();
        assert!((0.0..=0.25).contains(&report.kappa));
        assert!(report.omega <= report.r_min / 2.0 + 1e-15 || report.p == 2);
        if report.omega > 0.0 {
            assert!(report.t_min.is_finite() && report.mse_bound.is_finite());
            assert!(!report.vacuous);
        }
        if report.p == 1 {
            assert_eq!(report.omega, omega_arma(report.r_min, report.kappa));
        }
    }
}

#[test]
fn sparse_rate_shrinks_with_more_bins() {
    let model = InfluenceModel::with_enclosing_bounds(
        DVector::zeros(50),
        make_design(&DesignSpec::new(DesignKind::sparse(30), 50, 1)).unwrap(),
        BasisSet::Geometric { alpha: 0.25 },
        Saturation::clip(6.0),
    )
    .unwrap();
    let (process, _, _) = process_constants(&model).unwrap();
    let a = sparse_learning_rate(30, 50, 400, &process, 1.0).bound;
    let b = sparse_learning_rate(30, 50, 800, &process, 1.0).bound;
    let log_ratio = ((50.0f64 * 800.0).ln() / (50.0f64 * 400.0).ln()).powi(6);
    assert!((b / a - 0.5 * log_ratio).abs() < 1e-12);
}
