use nalgebra::{DMatrix, DVector};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::model::{BasisSet, Bounds, CountMatrix, Design, InfluenceModel, Saturation};
use crate::solver::{fit, fit_diagonal, FitConfig, RegularizerSpec};

/// Floor on the mean count of the constant baseline.
const BASELINE_FLOOR: f64 = 1e-6;

fn poisson_loglik(design: &Design, model: &InfluenceModel, from_bin: usize) -> Result<f64> {
    let rates = design.rates(&model.a, &model.nu)?;
    let mut total = 0.0;
    for m in 0..design.nodes() {
        for t in from_bin..design.bins() {
            let x = design.targets[(t, m)];
            let lambda = rates[(t, m)];
            total += x * lambda.ln() - lambda - ln_factorial(x as u64);
        }
    }
    Ok(total)
}

fn check_nodes(model: &InfluenceModel, x: &CountMatrix) -> Result<()> {
    if model.nodes() != x.nodes() {
        return Err(Error::Dimension(format!(
            "model has {} nodes, counts have {}",
            model.nodes(),
            x.nodes()
        )));
    }
    Ok(())
}

/// Poisson log-likelihood `Σ [X log λ − λ − log X!]` of `x` with the history
/// reset at its first bin.
pub fn evaluate_loglik(model: &InfluenceModel, x: &CountMatrix) -> Result<f64> {
    check_nodes(model, x)?;
    let design = Design::new(x, &model.basis, &model.saturation)?;
    poisson_loglik(&design, model, 0)
}

/// As [`evaluate_loglik`] on `test`, but with the history of `train` carried
/// into the first test bins.
pub fn evaluate_loglik_with_history(model: &InfluenceModel, train: &CountMatrix, test: &CountMatrix) -> Result<f64> {
    check_nodes(model, train)?;
    check_nodes(model, test)?;
    let joined = CountMatrix::new(
        train.bins() + test.bins(),
        test.nodes(),
        [train.as_slice(), test.as_slice()].concat(),
    )?;
    let design = Design::new(&joined, &model.basis, &model.saturation)?;
    poisson_loglik(&design, model, train.bins())
}

/// Upper bound of any model's log-likelihood: every rate equal to its count.
pub fn saturated_loglik(x: &CountMatrix) -> f64 {
    x.as_slice()
        .iter()
        .map(|&c| {
            let c = f64::from(c);
            let log_term = if c > 0.0 { c * c.ln() } else { 0.0 };
            log_term - c - ln_factorial(c as u64)
        })
        .sum()
}

/// Constant process `λ_m = mean_m`, floored at `1e−6`.
pub fn baseline_constant(x: &CountMatrix) -> Result<InfluenceModel> {
    let m = x.nodes();
    let nu = DVector::from_iterator(m, x.node_means().into_iter().map(|v| v.max(BASELINE_FLOOR).ln()));
    InfluenceModel::with_enclosing_bounds(nu, DMatrix::zeros(m, m), BasisSet::Geometric { alpha: 0.0 }, Saturation::clip(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikComparison {
    pub full: f64,
    pub diagonal: f64,
    pub constant: f64,
}

/// Train the full, diagonal and constant models on the first `train_bins`
/// bins and score them on the rest.
pub fn compare_models(
    x: &CountMatrix,
    train_bins: usize,
    basis: &BasisSet,
    sat: &Saturation,
    reg: &RegularizerSpec,
    bounds: &Bounds,
    cfg: &FitConfig,
) -> Result<LoglikComparison> {
    if train_bins < 2 || train_bins >= x.bins() {
        return Err(Error::Parameter(format!(
            "train split {train_bins} must leave both parts nonempty (T = {})",
            x.bins()
        )));
    }
    let train = x.slice_bins(0..train_bins)?;
    let test = x.slice_bins(train_bins..x.bins())?;
    let full = fit(&train, basis, sat, reg, bounds, cfg)?.model;
    let diagonal = fit_diagonal(&train, basis, sat, bounds, cfg)?.model;
    let constant = baseline_constant(&train)?;
    Ok(LoglikComparison {
        full: evaluate_loglik(&full, &test)?,
        diagonal: evaluate_loglik(&diagonal, &test)?,
        constant: evaluate_loglik(&constant, &test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_constant_rate() {
        let c: f64 = 0.7;
        let model = InfluenceModel::with_enclosing_bounds(
            DVector::from_element(3, c.ln()),
            DMatrix::zeros(3, 3),
            BasisSet::Geometric { alpha: 0.5 },
            Saturation::clip(6.0),
        )
        .unwrap();
        let x = CountMatrix::zeros(10, 3).unwrap();
        assert!((evaluate_loglik(&model, &x).unwrap() + 30.0 * c).abs() < 1e-12);
    }

    #[test]
    fn baseline_examples() {
        let x = CountMatrix::from_rows(&[vec![2, 0], vec![2, 0], vec![2, 0]]).unwrap();
        let b = baseline_constant(&x).unwrap();
        assert!((b.nu[0] - 2f64.ln()).abs() < 1e-15);
        assert!((b.nu[1] - 1e-6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn baseline_is_grid_optimal() {
        let x = CountMatrix::from_rows(&[vec![1, 4], vec![0, 6], vec![3, 5], vec![2, 2]]).unwrap();
        let best = evaluate_loglik(&baseline_constant(&x).unwrap(), &x).unwrap();
        assert!(best <= saturated_loglik(&x));
        for i in -40..=40 {
            for j in -40..=40 {
                let nu = DVector::from_vec(vec![0.05 * i as f64, 0.05 * j as f64]);
                let model = InfluenceModel::with_enclosing_bounds(
                    nu,
                    DMatrix::zeros(2, 2),
                    BasisSet::Geometric { alpha: 0.0 },
                    Saturation::clip(1.0),
                )
                .unwrap();
                assert!(evaluate_loglik(&model, &x).unwrap() <= best + 1e-12);
            }
        }
    }

    #[test]
    fn carry_over_differs_only_through_history() {
        let model = InfluenceModel::with_enclosing_bounds(
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 0.2),
            BasisSet::Geometric { alpha: 0.0 },
            Saturation::clip(6.0),
        )
        .unwrap();
        let train = CountMatrix::from_rows(&[vec![3]]).unwrap();
        let test = CountMatrix::from_rows(&[vec![1], vec![0]]).unwrap();
        let reset = evaluate_loglik(&model, &test).unwrap();
        let carried = evaluate_loglik_with_history(&model, &train, &test).unwrap();
        // Only the first test bin changes: rate 1 → e^0.6.
        let l = 0.6f64.exp();
        assert!((carried - reset - (0.6 - l + 1.0)).abs() < 1e-12);
    }
}
