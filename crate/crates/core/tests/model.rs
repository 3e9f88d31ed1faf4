use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seppnet::model::{features_update, nll, rate_bounds, rates, residuals, Bounds, Design};
use seppnet::{BasisSet, CountMatrix, FeatureVector, InfluenceModel, Saturation};

fn model(nu: Vec<f64>, a: DMatrix<f64>, basis: BasisSet, u: f64) -> InfluenceModel {
    InfluenceModel::with_enclosing_bounds(DVector::from_vec(nu), a, basis, Saturation::clip(u)).unwrap()
}

#[test]
fn geometric_update_examples() {
    let basis = BasisSet::Geometric { alpha: 0.0 };
    let sat = Saturation::clip(6.0);
    let mut g = FeatureVector::zeros(1, &basis);
    g = features_update(&g, &[3], &basis, &sat).unwrap();
    g = features_update(&g, &[10], &basis, &sat).unwrap();
    assert_eq!(g.as_slice(), &[6.0]);

    let basis = BasisSet::Geometric { alpha: 0.5 };
    let g0 = FeatureVector::zeros(1, &basis);
    let g1 = features_update(&g0, &[2], &basis, &sat).unwrap();
    let g2 = features_update(&g1, &[10], &basis, &sat).unwrap();
    assert_eq!(g2.as_slice(), &[7.0]);
    let g3 = features_update(&g2, &[0], &basis, &sat).unwrap();
    assert_eq!(g3.as_slice(), &[3.5]);
}

#[test]
fn lag_update_shifts_blocks() {
    let basis = BasisSet::Lags { p: 2 };
    let sat = Saturation::clip(6.0);
    let g = FeatureVector::zeros(2, &basis);
    let g = features_update(&g, &[1, 9], &basis, &sat).unwrap();
    assert_eq!(g.as_slice(), &[1.0, 6.0, 0.0, 0.0]);
    let g = features_update(&g, &[0, 0], &basis, &sat).unwrap();
    assert_eq!(g.as_slice(), &[0.0, 0.0, 1.0, 6.0]);
}

#[test]
fn table_basis_matches_direct_convolution() {
    let values = vec![vec![1.0, 0.5, 0.25], vec![0.0, 1.0]];
    let basis = BasisSet::Table { values: values.clone() };
    let sat = Saturation::clip(4.0);
    let counts = [[2u32], [7], [1], [0], [3]];
    let mut g = FeatureVector::zeros(1, &basis);
    for (t, x) in counts.iter().enumerate() {
        g = features_update(&g, x, &basis, &sat).unwrap();
        for (k, phi) in values.iter().enumerate() {
            let direct: f64 = (0..=t)
                .filter(|s| t - s < phi.len())
                .map(|s| f64::from(counts[s][0]).min(4.0) * phi[t - s])
                .sum();
            assert!((g.as_slice()[k] - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let basis = BasisSet::Geometric { alpha: 0.0 };
    let g = FeatureVector::zeros(2, &basis);
    assert!(features_update(&g, &[1, 2, 3], &basis, &Saturation::clip(6.0)).is_err());
}

#[test]
fn rate_examples() {
    let basis = BasisSet::Geometric { alpha: 0.0 };
    let sat = Saturation::clip(6.0);
    let m = model(vec![0.0; 3], DMatrix::zeros(3, 3), basis.clone(), 6.0);
    let g = features_update(&FeatureVector::zeros(3, &basis), &[4, 0, 9], &basis, &sat).unwrap();
    assert_eq!(rates(&m, &g).unwrap(), vec![1.0; 3]);

    let m = model(vec![0.0], DMatrix::from_element(1, 1, 0.3), basis.clone(), 6.0);
    let g = features_update(&FeatureVector::zeros(1, &basis), &[6], &basis, &sat).unwrap();
    assert!((rates(&m, &g).unwrap()[0] - 6.04965).abs() < 1e-5);

    let m = model(vec![0.0], DMatrix::from_element(1, 1, -0.5), basis.clone(), 6.0);
    let g = features_update(&FeatureVector::zeros(1, &basis), &[2], &basis, &sat).unwrap();
    assert!((rates(&m, &g).unwrap()[0] - 0.36788).abs() < 1e-5);
}

#[test]
fn rate_overflow_reports_row() {
    let basis = BasisSet::Geometric { alpha: 0.0 };
    let m = model(vec![0.0, 0.0], DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 200.0, 0.0]), basis.clone(), 6.0);
    let g = features_update(&FeatureVector::zeros(2, &basis), &[6, 0], &basis, &Saturation::clip(6.0)).unwrap();
    match rates(&m, &g) {
        Err(seppnet::Error::RateOverflow { row, .. }) => assert_eq!(row, 1),
        other => panic!("expected overflow, got {other:?}"),
    }
}

#[test]
fn rate_bound_examples() {
    let mut m = model(vec![0.0], DMatrix::zeros(1, 1), BasisSet::Geometric { alpha: 0.0 }, 6.0);
    assert_eq!(rate_bounds(&m), (1.0, 1.0));
    m.basis = BasisSet::Geometric { alpha: 0.25 };
    m.bounds = Bounds { a_max: 0.3, a_min: 0.0, nu_min: 0.0, nu_max: 0.0 };
    assert!((rate_bounds(&m).1 - 11.0232).abs() < 1e-4);
    m.basis = BasisSet::Geometric { alpha: 0.0 };
    m.bounds = Bounds { a_max: 0.0, a_min: 0.7, nu_min: 0.0, nu_max: 0.0 };
    assert!((rate_bounds(&m).0 - 0.01500).abs() < 1e-5);
}

#[test]
fn nll_of_zero_model_is_t_times_m() {
    let m = model(vec![0.0; 3], DMatrix::zeros(3, 3), BasisSet::Geometric { alpha: 0.25 }, 6.0);
    let x = CountMatrix::from_rows(&[vec![1, 4, 0], vec![2, 0, 9], vec![0, 0, 1], vec![5, 5, 5]]).unwrap();
    assert!((nll(&m, &x).unwrap().value - 12.0).abs() < 1e-12);
}

#[test]
fn single_transition_term() {
    // X = [2, 3]: the first bin is predicted from the empty history
    // (contributing exp(0) − 2·0 = 1); the transition term is
    // exp(0.2) − 3·0.2.
    let m = model(vec![0.0], DMatrix::from_element(1, 1, 0.1), BasisSet::Geometric { alpha: 0.0 }, 6.0);
    let x = CountMatrix::from_rows(&[vec![2], vec![3]]).unwrap();
    let value = nll(&m, &x).unwrap().value;
    assert!((value - 1.0 - 0.62140).abs() < 1e-5);
    assert!((value - 1.0 - (0.2f64.exp() - 0.6)).abs() < 1e-12);
}

#[test]
fn nll_needs_two_bins() {
    let m = model(vec![0.0], DMatrix::zeros(1, 1), BasisSet::Geometric { alpha: 0.0 }, 6.0);
    assert!(nll(&m, &CountMatrix::zeros(1, 1).unwrap()).is_err());
}

#[test]
fn residuals_are_counts_minus_rates() {
    let m = model(vec![0.5, -0.2], DMatrix::from_row_slice(2, 2, &[0.1, 0.0, -0.3, 0.2]), BasisSet::Geometric { alpha: 0.0 }, 6.0);
    let x = CountMatrix::from_rows(&[vec![1, 2], vec![0, 3], vec![4, 1]]).unwrap();
    let eps = residuals(&m, &x).unwrap();
    // Bin 1 is predicted from clip(X_0) = (1, 2).
    let lam = (0.5f64 + 0.1).exp();
    assert!((eps[(1, 0)] - (0.0 - lam)).abs() < 1e-12);
    let lam = (-0.2f64 - 0.3 + 0.4).exp();
    assert!((eps[(1, 1)] - (3.0 - lam)).abs() < 1e-12);
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Design, DMatrix<f64>, DVector<f64>) {
    let m = rng.random_range(1..=5);
    let basis = if rng.random_bool(0.5) {
        BasisSet::Geometric { alpha: rng.random_range(0.0..0.8) }
    } else {
        BasisSet::Lags { p: rng.random_range(1..=2) }
    };
    let k = basis.len();
    let t = rng.random_range(20..=100);
    let data: Vec<u32> = (0..t * m).map(|_| rng.random_range(0..9)).collect();
    let x = CountMatrix::new(t, m, data).unwrap();
    let design = Design::new(&x, &basis, &Saturation::clip(6.0)).unwrap();
    let a = DMatrix::from_fn(m, m * k, |_, _| rng.random_range(-0.15..0.1));
    let nu = DVector::from_fn(m, |_, _| rng.random_range(-0.5..0.5));
    (design, a, nu)
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (design, a, nu) = random_instance(&mut rng);
        let r = design.nll(&a, &nu).unwrap();
        let h = 1e-6;
        for idx in 0..a.len() {
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap[idx] += h;
            am[idx] -= h;
            let fd = (design.nll_value(&ap, &nu).unwrap() - design.nll_value(&am, &nu).unwrap()) / (2.0 * h);
            let g = r.grad_a[idx];
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1.0), "A[{idx}]: {fd} vs {g}");
        }
        for i in 0..nu.len() {
            let (mut np, mut nm) = (nu.clone(), nu.clone());
            np[i] += h;
            nm[i] -= h;
            let fd = (design.nll_value(&a, &np).unwrap() - design.nll_value(&a, &nm).unwrap()) / (2.0 * h);
            assert!((fd - r.grad_nu[i]).abs() <= 1e-5 * r.grad_nu[i].abs().max(1.0));
        }
    }
}

#[test]
fn nll_is_convex_along_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let (design, a1, nu1) = random_instance(&mut rng);
        let a2 = a1.map(|v| v + rng.random_range(-0.2..0.2));
        let nu2 = nu1.map(|v| v + rng.random_range(-0.5..0.5));
        let theta = rng.random_range(0.01..0.99);
        let mid = design
            .nll_value(&(&a1 * theta + &a2 * (1.0 - theta)), &(&nu1 * theta + &nu2 * (1.0 - theta)))
            .unwrap();
        let chord = theta * design.nll_value(&a1, &nu1).unwrap() + (1.0 - theta) * design.nll_value(&a2, &nu2).unwrap();
        assert!(mid <= chord + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn features_are_bounded(
        alpha in 0.0f64..0.95,
        u in 1.0f64..10.0,
        history in prop::collection::vec(prop::collection::vec(0u32..50, 3), 1..60),
    ) {
        let basis = BasisSet::Geometric { alpha };
        let sat = Saturation::clip(u);
        let mut g = FeatureVector::zeros(3, &basis);
        for x in &history {
            g.advance(x, &basis, &sat).unwrap();
            let bound = basis.tau() * u;
            prop_assert!(g.as_slice().iter().all(|v| *v <= bound * (1.0 + 1e-12) && *v >= 0.0));
        }
    }

    #[test]
    fn geometric_recursion_equals_direct_sum(
        alpha in 0.0f64..0.99,
        seq in prop::collection::vec(0u32..20, 1..=100),
    ) {
        let basis = BasisSet::Geometric { alpha };
        let sat = Saturation::clip(6.0);
        let mut g = FeatureVector::zeros(1, &basis);
        for x in &seq {
            g.advance(&[*x], &basis, &sat).unwrap();
        }
        let t = seq.len() - 1;
        let direct: f64 = seq.iter().enumerate().map(|(s, x)| f64::from(*x).min(6.0) * alpha.powi((t - s) as i32)).sum();
        prop_assert!((g.as_slice()[0] - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn feasible_rates_stay_in_bounds(
        seed in 0u64..1000,
        history in prop::collection::vec(prop::collection::vec(0u32..30, 4), 1..30),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-0.7..0.3));
        let nu = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let m = InfluenceModel::with_enclosing_bounds(nu, a, BasisSet::Geometric { alpha: 0.25 }, Saturation::clip(6.0)).unwrap();
        let (lo, hi) = rate_bounds(&m);
        let mut g = FeatureVector::zeros(4, &m.basis);
        for x in &history {
            g.advance(x, &m.basis, &m.saturation).unwrap();
            for r in rates(&m, &g).unwrap() {
                prop_assert!(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12));
            }
        }
    }
}
