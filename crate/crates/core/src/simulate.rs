//! Synthetic data: ground-truth influence designs and forward simulation.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rate_bounds, row_sign_sums, CountMatrix, FeatureVector, InfluenceModel};
use crate::rng::{stream, DESIGN_STREAM};

/// Default entry range for random designs.
pub const DEFAULT_RANGE: (f64, f64) = (-0.7, 0.3);
/// Default target for the maximum row positive mass of low-rank designs.
pub const DEFAULT_LOWRANK_TARGET: f64 = 0.3;
/// Nonzeros per row inside a diagonal block, and the support size of each
/// generating row of the two-row low-rank design.
pub const ROW_SUPPORT: usize = 5;
pub const BLOCK_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    /// `s` uniformly placed nonzeros drawn from `[low, high]`.
    Sparse { s: usize, low: f64, high: f64 },
    /// Diagonal blocks of size 10; each in-block row has 5 entries equal to
    /// `a_max / 5`.
    Block { a_max: f64 },
    /// Product of `M×r` and `r×M` uniform matrices, optionally rescaled so the
    /// largest row positive mass equals `target`.
    LowRank {
        r: usize,
        low: f64,
        high: f64,
        target: Option<f64>,
    },
    /// Two orthogonal generating rows with row sums `a_max`; all other rows
    /// are random convex combinations of them.
    TwoRows { a_max: f64 },
    /// Only `s_g` hub columns are nonzero, entries drawn from `[low, high]`.
    Hub { s_g: usize, low: f64, high: f64 },
}

impl DesignKind {
    pub fn sparse(s: usize) -> Self {
        DesignKind::Sparse {
            s,
            low: DEFAULT_RANGE.0,
            high: DEFAULT_RANGE.1,
        }
    }

    pub fn low_rank(r: usize) -> Self {
        DesignKind::LowRank {
            r,
            low: DEFAULT_RANGE.0,
            high: DEFAULT_RANGE.1,
            target: Some(DEFAULT_LOWRANK_TARGET),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub nodes: usize,
    /// Number of basis functions `K`; designs fill the first `M × M` block.
    #[serde(default = "one")]
    pub basis_len: usize,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl DesignSpec {
    pub fn new(kind: DesignKind, nodes: usize, seed: u64) -> Self {
        Self {
            kind,
            nodes,
            basis_len: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.nodes;
        if m == 0 || self.basis_len == 0 {
            return Err(Error::Parameter("design needs M >= 1 and K >= 1".into()));
        }
        let check_range = |low: f64, high: f64| {
            if low <= high && low.is_finite() && high.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("invalid value range [{low}, {high}]")))
            }
        };
        match self.kind {
            DesignKind::Sparse { s, low, high } => {
                check_range(low, high)?;
                if s > m * m * self.basis_len {
                    return Err(Error::Parameter(format!(
                        "s = {s} exceeds the {} available entries",
                        m * m * self.basis_len
                    )));
                }
            }
            DesignKind::Hub { s_g, low, high } => {
                check_range(low, high)?;
                if s_g > m {
                    return Err(Error::Parameter(format!("s_G = {s_g} exceeds M = {m}")));
                }
            }
            DesignKind::LowRank { r, low, high, target } => {
                check_range(low, high)?;
                if r > m {
                    return Err(Error::Parameter(format!("rank {r} exceeds M = {m}")));
                }
                if target.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
                    return Err(Error::Parameter("rescale target must be >= 0".into()));
                }
            }
            DesignKind::Block { a_max } | DesignKind::TwoRows { a_max } => {
                if !(a_max >= 0.0 && a_max.is_finite()) {
                    return Err(Error::Parameter(format!("a_max must be >= 0, got {a_max}")));
                }
                if matches!(self.kind, DesignKind::TwoRows { .. }) && m < 2 {
                    return Err(Error::Parameter("two-row design needs M >= 2".into()));
                }
            }
        }
        Ok(())
    }
}

/// Ground-truth influence matrix, `M × MK`. Deterministic in the seed.
pub fn make_design(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let m = spec.nodes;
    let cols = m * spec.basis_len;
    let mut rng = stream(spec.seed, DESIGN_STREAM);
    let mut a = DMatrix::zeros(m, cols);
    match spec.kind {
        DesignKind::Sparse { s, low, high } => {
            for idx in sample(&mut rng, m * cols, s) {
                a[(idx / cols, idx % cols)] = draw_nonzero(&mut rng, low, high);
            }
        }
        DesignKind::Hub { s_g, low, high } => {
            for col in sample(&mut rng, m, s_g) {
                for row in 0..m {
                    a[(row, col)] = rng.random_range(low..=high);
                }
            }
        }
        DesignKind::Block { a_max } => {
            for start in (0..m).step_by(BLOCK_SIZE) {
                let size = BLOCK_SIZE.min(m - start);
                let per_row = ROW_SUPPORT.min(size);
                for row in start..start + size {
                    for off in sample(&mut rng, size, per_row) {
                        a[(row, start + off)] = a_max / per_row as f64;
                    }
                }
            }
        }
        DesignKind::LowRank { r, low, high, target } => {
            let u = DMatrix::from_fn(m, r, |_, _| rng.random_range(low..=high));
            let v = DMatrix::from_fn(r, m, |_, _| rng.random_range(low..=high));
            let product = u * v;
            a.view_mut((0, 0), (m, m)).copy_from(&product);
            if let Some(target) = target {
                let (pos, _) = row_sign_sums(&a);
                let peak = pos.into_iter().fold(0.0, f64::max);
                if peak > 0.0 {
                    a *= target / peak;
                }
            }
        }
        DesignKind::TwoRows { a_max } => {
            let support = ROW_SUPPORT.min(m / 2);
            let picks = sample(&mut rng, m, 2 * support).into_vec();
            let value = a_max / support as f64;
            let mut first = DVector::zeros(m);
            let mut second = DVector::zeros(m);
            for &j in &picks[..support] {
                first[j] = value;
            }
            for &j in &picks[support..] {
                second[j] = value;
            }
            for row in 0..m {
                let w = match row {
                    0 => 1.0,
                    1 => 0.0,
                    _ => rng.random::<f64>(),
                };
                for j in 0..m {
                    a[(row, j)] = w * first[j] + (1.0 - w) * second[j];
                }
            }
        }
    }
    Ok(a)
}

/// Uniform draw from `[low, high]` that is never exactly zero, so the
/// nonzero count of a sparse design is exact.
fn draw_nonzero<R: Rng>(rng: &mut R, low: f64, high: f64) -> f64 {
    loop {
        let v = if low == high { low } else { rng.random_range(low..=high) };
        if v != 0.0 {
            return v;
        }
        if low == 0.0 && high == 0.0 {
            return f64::MIN_POSITIVE;
        }
    }
}

/// Forward simulation from the empty history (`g_0 = 0`).
///
/// Node `m` draws its Poisson variates from stream `m` of `seed`, so the output
/// depends only on the model, `bins` and `seed`.
pub fn simulate(model: &InfluenceModel, bins: usize, seed: u64) -> Result<CountMatrix> {
    simulate_with_burn_in(model, bins, seed, 0)
}

/// As [`simulate`], discarding the first `burn_in` bins.
pub fn simulate_with_burn_in(
    model: &InfluenceModel,
    bins: usize,
    seed: u64,
    burn_in: usize,
) -> Result<CountMatrix> {
    if bins == 0 {
        return Err(Error::Parameter("simulation needs T >= 1".into()));
    }
    model.check_feasible()?;
    let m = model.nodes();
    let (r_min, r_max) = rate_bounds(model);
    let slack = 1e-9;
    let mut rngs: Vec<_> = (0..m as u64).map(|node| stream(seed, node)).collect();
    let mut state = FeatureVector::zeros(m, &model.basis);
    let mut data = Vec::with_capacity(bins * m);
    let mut row = vec![0u32; m];
    for t in 0..bins + burn_in {
        let eta = &model.nu + &model.a * DVector::from_column_slice(state.as_slice());
        for node in 0..m {
            let rate = crate::model::guarded_exp(eta[node], node)?;
            if rate < r_min * (1.0 - slack) || rate > r_max * (1.0 + slack) {
                return Err(Error::Numeric(format!(
                    "rate {rate} of node {node} at bin {t} outside [{r_min}, {r_max}]"
                )));
            }
            let poisson = Poisson::new(rate)
                .map_err(|e| Error::Numeric(format!("cannot sample Poisson({rate}): {e}")))?;
            let draw = poisson.sample(&mut rngs[node]);
            row[node] = draw as u32;
        }
        if t >= burn_in {
            data.extend_from_slice(&row);
        }
        state.advance(&row, &model.basis, &model.saturation)?;
    }
    CountMatrix::new(bins, m, data)
}

/// Fraction of entries at or above `u`.
pub fn clip_rate(x: &CountMatrix, u: u32) -> f64 {
    let hits = x.as_slice().iter().filter(|&&c| c >= u).count();
    hits as f64 / x.as_slice().len() as f64
}
