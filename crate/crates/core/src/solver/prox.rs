//! Regularizers and their proximal operators.

use nalgebra::linalg::SVD;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    None,
    /// `λ Σ |a_ij|`
    L1 { lambda: f64 },
    /// `λ Σ_j ‖a_·j‖₂`, one group per column (source node and basis).
    GroupColumn { lambda: f64 },
    /// `λ ‖A‖_*`
    Nuclear { lambda: f64 },
    /// `A = L + S` with `λ_l1 ‖S‖₁ + λ_nuclear ‖L‖_*`.
    L1PlusNuclear { lambda_l1: f64, lambda_nuclear: f64 },
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |l: f64| l >= 0.0 && l.is_finite();
        let valid = match *self {
            RegularizerSpec::None => true,
            RegularizerSpec::L1 { lambda }
            | RegularizerSpec::GroupColumn { lambda }
            | RegularizerSpec::Nuclear { lambda } => ok(lambda),
            RegularizerSpec::L1PlusNuclear {
                lambda_l1,
                lambda_nuclear,
            } => ok(lambda_l1) && ok(lambda_nuclear),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Parameter(format!("regularization weights must be >= 0: {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerSpec::None => "none",
            RegularizerSpec::L1 { .. } => "l1",
            RegularizerSpec::GroupColumn { .. } => "group",
            RegularizerSpec::Nuclear { .. } => "nuclear",
            RegularizerSpec::L1PlusNuclear { .. } => "l1+nuclear",
        }
    }

    /// Same kind with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            RegularizerSpec::None => RegularizerSpec::None,
            RegularizerSpec::L1 { lambda } => RegularizerSpec::L1 { lambda: lambda * factor },
            RegularizerSpec::GroupColumn { lambda } => RegularizerSpec::GroupColumn { lambda: lambda * factor },
            RegularizerSpec::Nuclear { lambda } => RegularizerSpec::Nuclear { lambda: lambda * factor },
            RegularizerSpec::L1PlusNuclear {
                lambda_l1,
                lambda_nuclear,
            } => RegularizerSpec::L1PlusNuclear {
                lambda_l1: lambda_l1 * factor,
                lambda_nuclear: lambda_nuclear * factor,
            },
        }
    }
}

fn singular_values(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    SVD::try_new(a.clone(), false, false, f64::EPSILON, 0)
        .map(|svd| svd.singular_values)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))
}

/// Penalty value of a single matrix. The decomposed `l1+nuclear` penalty is
/// not a function of `A` alone and is rejected here.
pub fn penalty(reg: &RegularizerSpec, a: &DMatrix<f64>) -> Result<f64> {
    Ok(match *reg {
        RegularizerSpec::None => 0.0,
        RegularizerSpec::L1 { lambda } => lambda * a.iter().map(|v| v.abs()).sum::<f64>(),
        RegularizerSpec::GroupColumn { lambda } => lambda * a.column_iter().map(|c| c.norm()).sum::<f64>(),
        RegularizerSpec::Nuclear { lambda } => {
            if lambda == 0.0 {
                0.0
            } else {
                lambda * singular_values(a)?.sum()
            }
        }
        RegularizerSpec::L1PlusNuclear { .. } => {
            return Err(Error::Parameter("l1+nuclear penalty is defined on a decomposition L + S".into()))
        }
    })
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

/// `argmin_X ½‖X − Z‖²_F + step · penalty(X)`.
pub fn prox(reg: &RegularizerSpec, z: &DMatrix<f64>, step: f64) -> Result<DMatrix<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!("prox step must be positive, got {step}")));
    }
    reg.validate()?;
    match *reg {
        RegularizerSpec::None => Ok(z.clone()),
        RegularizerSpec::L1 { lambda } => {
            let t = step * lambda;
            Ok(z.map(|v| soft_threshold(v, t)))
        }
        RegularizerSpec::GroupColumn { lambda } => {
            let t = step * lambda;
            let mut out = z.clone();
            for mut col in out.column_iter_mut() {
                let norm = col.norm();
                let scale = if norm > t { 1.0 - t / norm } else { 0.0 };
                col *= scale;
            }
            Ok(out)
        }
        RegularizerSpec::Nuclear { lambda } => {
            let t = step * lambda;
            if t == 0.0 {
                return Ok(z.clone());
            }
            let mut svd = SVD::try_new(z.clone(), true, true, f64::EPSILON, 0)
                .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
            svd.singular_values.apply(|s| *s = (*s - t).max(0.0));
            svd.recompose().map_err(|e| Error::Numeric(e.to_string()))
        }
        RegularizerSpec::L1PlusNuclear { .. } => Err(Error::Parameter(
            "l1+nuclear has no single-matrix prox; fit it as a decomposition".into(),
        )),
    }
}
