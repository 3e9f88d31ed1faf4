//! The saturated self-exciting point process model.
//!
//! Counts `X[t, m]` drive the log-rate of every node through a clipped,
//! basis-weighted history:
//!
//! ```text
//! log λ[t+1] = ν + A · g(X[1..=t])
//! g_k[m']    = Σ_s f(X[s, m']) · φ_k[t - s]
//! ```
//!
//! where `f` is the saturation (by default `min(x, Ũ)`). Feature vectors are
//! stacked block-wise, `g = [g_1; …; g_K]`, so `A` is `M × MK` and column
//! `k·M + m'` of row `m` is the influence of node `m'` on node `m` through
//! basis function `k`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest exponent accepted when evaluating a rate.
pub const EXPONENT_GUARD: f64 = 700.0;

/// Event counts, one row per time bin and one column per node.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    bins: usize,
    nodes: usize,
    data: Vec<u32>,
    /// Optional bin width in seconds.
    pub bin_width: Option<f64>,
}

impl CountMatrix {
    pub fn new(bins: usize, nodes: usize, data: Vec<u32>) -> Result<Self> {
        if bins == 0 || nodes == 0 {
            return Err(Error::Dimension(format!(
                "count matrix must be at least 1x1, got {bins}x{nodes}"
            )));
        }
        if data.len() != bins * nodes {
            return Err(Error::Dimension(format!(
                "expected {} entries for {bins}x{nodes} counts, got {}",
                bins * nodes,
                data.len()
            )));
        }
        Ok(Self {
            bins,
            nodes,
            data,
            bin_width: None,
        })
    }

    pub fn zeros(bins: usize, nodes: usize) -> Result<Self> {
        Self::new(bins, nodes, vec![0; bins * nodes])
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let nodes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nodes) {
            return Err(Error::Dimension("ragged count rows".into()));
        }
        Self::new(rows.len(), nodes, rows.concat())
    }

    /// Number of time bins `T`.
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Number of nodes `M`.
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn get(&self, t: usize, m: usize) -> u32 {
        self.data[t * self.nodes + m]
    }

    pub fn row(&self, t: usize) -> &[u32] {
        &self.data[t * self.nodes..(t + 1) * self.nodes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.data.chunks_exact(self.nodes)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.data
    }

    pub fn total(&self) -> u64 {
        self.data.iter().map(|&x| u64::from(x)).sum()
    }

    pub fn node_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.nodes];
        for row in self.rows() {
            for (acc, &x) in totals.iter_mut().zip(row) {
                *acc += u64::from(x);
            }
        }
        totals
    }

    pub fn node_means(&self) -> Vec<f64> {
        self.node_totals()
            .into_iter()
            .map(|s| s as f64 / self.bins as f64)
            .collect()
    }

    /// Rows `range` as a new matrix.
    pub fn slice_bins(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.bins {
            return Err(Error::Dimension(format!(
                "bin range {range:?} outside 0..{}",
                self.bins
            )));
        }
        let data = self.data[range.start * self.nodes..range.end * self.nodes].to_vec();
        let mut out = Self::new(range.len(), self.nodes, data)?;
        out.bin_width = self.bin_width;
        Ok(out)
    }

    /// Reorder nodes so that new column `i` is old column `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.nodes)?;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(perm.iter().map(|&p| row[p]));
        }
        Self::new(self.bins, self.nodes, data)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Parameter(format!("not a permutation of 0..{n}")));
    }
    Ok(())
}

/// The temporal kernels `φ_k`. Lag `j = 0` is the most recent bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisSet {
    /// `K = 1`, `φ[j] = α^j`: the ARMA(1,1) model.
    Geometric { alpha: f64 },
    /// `K = p`, `φ_k[j] = 1{j = k}`: the AR(p) model.
    Lags { p: usize },
    /// Arbitrary finite-support kernels, `values[k][j] = φ_k[j]`.
    Table { values: Vec<Vec<f64>> },
}

impl BasisSet {
    pub fn validate(&self) -> Result<()> {
        match self {
            BasisSet::Geometric { alpha } if !(0.0..1.0).contains(alpha) => Err(Error::Parameter(
                format!("geometric alpha must lie in [0, 1), got {alpha}"),
            )),
            BasisSet::Lags { p: 0 } => Err(Error::Parameter("lag basis needs p >= 1".into())),
            BasisSet::Table { values } => {
                if values.is_empty() || values.iter().any(Vec::is_empty) {
                    return Err(Error::Parameter("table basis needs nonempty kernels".into()));
                }
                if values.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Parameter(
                        "table basis values must be finite and nonnegative".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Number of basis functions `K`.
    pub fn len(&self) -> usize {
        match self {
            BasisSet::Geometric { .. } => 1,
            BasisSet::Lags { p } => *p,
            BasisSet::Table { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `τ = max_k Σ_j φ_k[j]`.
    pub fn tau(&self) -> f64 {
        match self {
            BasisSet::Geometric { alpha } => 1.0 / (1.0 - alpha),
            BasisSet::Lags { .. } => 1.0,
            BasisSet::Table { values } => values
                .iter()
                .map(|v| v.iter().sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    /// Conditioning lag used by the restricted-eigenvalue constants.
    pub fn conditioning_lag(&self) -> usize {
        match self {
            BasisSet::Geometric { .. } => 1,
            BasisSet::Lags { p } => *p,
            BasisSet::Table { values } => values.iter().map(Vec::len).max().unwrap_or(1),
        }
    }

    fn memory(&self) -> usize {
        match self {
            BasisSet::Table { values } => values.iter().map(Vec::len).max().unwrap_or(0),
            _ => 0,
        }
    }
}

/// Saturation applied to past counts before they enter the rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Saturation {
    /// `f(x) = min(x, u)`.
    Clip { u: f64 },
    /// `f(x) = u · tanh(x / u)`, a smooth bounded alternative.
    Tanh { u: f64 },
}

impl Saturation {
    pub fn clip(u: f64) -> Self {
        Saturation::Clip { u }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Saturation::Clip { u } if !(u >= 1.0 && u.is_finite()) => Err(Error::Parameter(
                format!("clip threshold must be finite and >= 1, got {u}"),
            )),
            Saturation::Tanh { u } if !(u > 0.0 && u.is_finite()) => Err(Error::Parameter(
                format!("tanh saturation bound must be positive, got {u}"),
            )),
            _ => Ok(()),
        }
    }

    /// Upper bound `Ũ` of the saturation.
    pub fn bound(&self) -> f64 {
        match *self {
            Saturation::Clip { u } | Saturation::Tanh { u } => u,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Saturation::Clip { u } => x.min(u),
            Saturation::Tanh { u } => u * (x / u).tanh(),
        }
    }

    /// Derivative of the saturation. The clip derivative at the kink is taken
    /// from the left.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Saturation::Clip { u } => {
                if x <= u {
                    1.0
                } else {
                    0.0
                }
            }
            Saturation::Tanh { u } => {
                let c = (x / u).cosh();
                1.0 / (c * c)
            }
        }
    }

    pub fn is_clip(&self) -> bool {
        matches!(self, Saturation::Clip { .. })
    }

    /// Minimum of `f'` over a 1000-point uniform grid on `[0, upper]`.
    pub fn derivative_floor(&self, upper: f64) -> f64 {
        const GRID: usize = 1000;
        (0..GRID)
            .map(|i| self.derivative(upper * i as f64 / (GRID - 1) as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Constraint set and offset range of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub a_max: f64,
    pub a_min: f64,
    pub nu_min: f64,
    pub nu_max: f64,
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a_max >= 0.0
            && self.a_min >= 0.0
            && self.a_max.is_finite()
            && self.a_min.is_finite()
            && self.nu_min.is_finite()
            && self.nu_max.is_finite()
            && self.nu_min <= self.nu_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid bounds {self:?}")))
        }
    }

    /// Tightest bounds containing the given parameters.
    pub fn enclosing(a: &DMatrix<f64>, nu: &DVector<f64>) -> Self {
        let (pos, neg) = row_sign_sums(a);
        Self {
            a_max: pos.into_iter().fold(0.0, f64::max),
            a_min: neg.into_iter().fold(0.0, f64::max),
            nu_min: nu.iter().copied().fold(f64::INFINITY, f64::min),
            nu_max: nu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Per-row `‖a_m‖_{1+}` and `‖a_m‖_{1-}`.
pub fn row_sign_sums(a: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    a.row_iter()
        .map(|r| {
            r.iter().fold((0.0, 0.0), |(p, n), &v| {
                if v > 0.0 {
                    (p + v, n)
                } else {
                    (p, n - v)
                }
            })
        })
        .unzip()
}

/// A fully specified saturated SEPP.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceModel {
    pub nu: DVector<f64>,
    pub a: DMatrix<f64>,
    pub basis: BasisSet,
    pub saturation: Saturation,
    pub bounds: Bounds,
}

/// Slack allowed when checking membership in the constraint set.
const FEASIBILITY_SLACK: f64 = 1e-9;

impl InfluenceModel {
    /// Builds a model, checking dimensions. Bound membership is checked
    /// separately by [`InfluenceModel::check_feasible`].
    pub fn new(
        nu: DVector<f64>,
        a: DMatrix<f64>,
        basis: BasisSet,
        saturation: Saturation,
        bounds: Bounds,
    ) -> Result<Self> {
        basis.validate()?;
        saturation.validate()?;
        bounds.validate()?;
        let m = nu.len();
        if m == 0 || a.nrows() != m || a.ncols() != m * basis.len() {
            return Err(Error::Dimension(format!(
                "A must be {m}x{} for {m} nodes and K={}, got {}x{}",
                m * basis.len(),
                basis.len(),
                a.nrows(),
                a.ncols()
            )));
        }
        if nu.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("model parameters must be finite".into()));
        }
        Ok(Self {
            nu,
            a,
            basis,
            saturation,
            bounds,
        })
    }

    /// Model with tight bounds computed from the parameters.
    pub fn with_enclosing_bounds(
        nu: DVector<f64>,
        a: DMatrix<f64>,
        basis: BasisSet,
        saturation: Saturation,
    ) -> Result<Self> {
        let bounds = Bounds::enclosing(&a, &nu);
        Self::new(nu, a, basis, saturation, bounds)
    }

    pub fn nodes(&self) -> usize {
        self.nu.len()
    }

    pub fn feature_len(&self) -> usize {
        self.a.ncols()
    }

    /// `U = τ·Ũ`, the bound on every feature entry.
    pub fn feature_bound(&self) -> f64 {
        self.basis.tau() * self.saturation.bound()
    }

    /// Errors unless `A ∈ 𝒜` and every `ν_m` lies in `[ν_min, ν_max]`.
    pub fn check_feasible(&self) -> Result<()> {
        let b = &self.bounds;
        let (pos, neg) = row_sign_sums(&self.a);
        for (m, (p, n)) in pos.iter().zip(&neg).enumerate() {
            if *p > b.a_max + FEASIBILITY_SLACK || *n > b.a_min + FEASIBILITY_SLACK {
                return Err(Error::Parameter(format!(
                    "row {m} has positive/negative mass {p}/{n}, bounds are {}/{}",
                    b.a_max, b.a_min
                )));
            }
        }
        if let Some((m, v)) = self
            .nu
            .iter()
            .enumerate()
            .find(|(_, v)| **v < b.nu_min - FEASIBILITY_SLACK || **v > b.nu_max + FEASIBILITY_SLACK)
        {
            return Err(Error::Parameter(format!(
                "nu[{m}] = {v} outside [{}, {}]",
                b.nu_min, b.nu_max
            )));
        }
        Ok(())
    }

    /// Reorders nodes consistently in `ν`, the rows of `A` and every
    /// basis block of its columns.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let m = self.nodes();
        check_permutation(perm, m)?;
        let k = self.basis.len();
        let nu = DVector::from_fn(m, |i, _| self.nu[perm[i]]);
        let a = DMatrix::from_fn(m, m * k, |i, j| {
            let (block, col) = (j / m, j % m);
            self.a[(perm[i], block * m + perm[col])]
        });
        Self::new(nu, a, self.basis.clone(), self.saturation, self.bounds)
    }
}

/// `g(𝒳_t)` together with whatever recent history the basis needs to advance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    g: Vec<f64>,
    nodes: usize,
    /// Saturated count vectors, most recent first. Only kept for table bases.
    recent: VecDeque<Vec<f64>>,
}

impl FeatureVector {
    /// Features of the empty history.
    pub fn zeros(nodes: usize, basis: &BasisSet) -> Self {
        Self {
            g: vec![0.0; nodes * basis.len()],
            nodes,
            recent: VecDeque::new(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.g
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Appends the counts of one more bin.
    pub fn advance(&mut self, x: &[u32], basis: &BasisSet, sat: &Saturation) -> Result<()> {
        let m = self.nodes;
        if x.len() != m || self.g.len() != m * basis.len() {
            return Err(Error::Dimension(format!(
                "feature state of length {} cannot take {} counts under a K={} basis",
                self.g.len(),
                x.len(),
                basis.len()
            )));
        }
        let clipped = x.iter().map(|&c| sat.apply(f64::from(c)));
        match basis {
            BasisSet::Geometric { alpha } => {
                for (g, f) in self.g.iter_mut().zip(clipped) {
                    *g = f + alpha * *g;
                }
            }
            BasisSet::Lags { .. } => {
                let len = self.g.len();
                self.g.copy_within(0..len - m, m);
                for (g, f) in self.g[..m].iter_mut().zip(clipped) {
                    *g = f;
                }
            }
            BasisSet::Table { values } => {
                self.recent.push_front(clipped.collect());
                self.recent.truncate(basis.memory());
                for (k, kernel) in values.iter().enumerate() {
                    let block = &mut self.g[k * m..(k + 1) * m];
                    block.fill(0.0);
                    for (weight, past) in kernel.iter().zip(&self.recent) {
                        for (g, f) in block.iter_mut().zip(past) {
                            *g += weight * f;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`FeatureVector::advance`].
pub fn features_update(
    state: &FeatureVector,
    x: &[u32],
    basis: &BasisSet,
    sat: &Saturation,
) -> Result<FeatureVector> {
    let mut next = state.clone();
    next.advance(x, basis, sat)?;
    Ok(next)
}

/// Guarded `exp(η)` for one row.
pub(crate) fn guarded_exp(eta: f64, row: usize) -> Result<f64> {
    if eta > EXPONENT_GUARD || eta.is_nan() {
        return Err(Error::RateOverflow { row, exponent: eta });
    }
    Ok(eta.max(-EXPONENT_GUARD).exp())
}

/// `λ = exp(ν + A g)`.
pub fn rates(model: &InfluenceModel, g: &FeatureVector) -> Result<Vec<f64>> {
    if g.as_slice().len() != model.feature_len() || g.nodes() != model.nodes() {
        return Err(Error::Dimension(format!(
            "feature vector of length {} does not match a model with {} columns",
            g.as_slice().len(),
            model.feature_len()
        )));
    }
    let gv = DVector::from_column_slice(g.as_slice());
    let eta = &model.nu + &model.a * gv;
    eta.iter()
        .enumerate()
        .map(|(m, &e)| guarded_exp(e, m))
        .collect()
}

/// `(R_min, R_max)` implied by the model's bounds.
pub fn rate_bounds(model: &InfluenceModel) -> (f64, f64) {
    rate_bounds_for(&model.bounds, model.feature_bound())
}

pub fn rate_bounds_for(bounds: &Bounds, feature_bound: f64) -> (f64, f64) {
    (
        (bounds.nu_min - bounds.a_min * feature_bound).exp(),
        (bounds.nu_max + bounds.a_max * feature_bound).exp(),
    )
}

/// Features and targets of a count series, precomputed once.
///
/// Row `t` of `features` is `g(𝒳_t)` for `t = 0..T` (row 0 is the empty
/// history) and row `t` of `targets` is the count vector it predicts,
/// i.e. bin `t` of the input.
#[derive(Debug, Clone)]
pub struct Design {
    pub features: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub basis: BasisSet,
    pub saturation: Saturation,
}

impl Design {
    pub fn new(x: &CountMatrix, basis: &BasisSet, sat: &Saturation) -> Result<Self> {
        basis.validate()?;
        sat.validate()?;
        let (t_len, m) = (x.bins(), x.nodes());
        let mut features = DMatrix::zeros(t_len, m * basis.len());
        let mut state = FeatureVector::zeros(m, basis);
        for t in 1..t_len {
            state.advance(x.row(t - 1), basis, sat)?;
            for (j, v) in state.as_slice().iter().enumerate() {
                features[(t, j)] = *v;
            }
        }
        let targets = DMatrix::from_fn(t_len, m, |t, j| f64::from(x.get(t, j)));
        Ok(Self {
            features,
            targets,
            basis: basis.clone(),
            saturation: *sat,
        })
    }

    pub fn bins(&self) -> usize {
        self.targets.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.targets.ncols()
    }

    pub fn feature_len(&self) -> usize {
        self.features.ncols()
    }

    fn check(&self, a: &DMatrix<f64>, nu: &DVector<f64>) -> Result<()> {
        if a.nrows() != self.nodes() || a.ncols() != self.feature_len() || nu.len() != self.nodes() {
            return Err(Error::Dimension(format!(
                "parameters {}x{} / {} do not match data with {} nodes and {} features",
                a.nrows(),
                a.ncols(),
                nu.len(),
                self.nodes(),
                self.feature_len()
            )));
        }
        Ok(())
    }

    /// Rates `λ[t, m] = exp(ν_m + a_m·g_t)`, `T × M`.
    pub fn rates(&self, a: &DMatrix<f64>, nu: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(a, nu)?;
        let mut eta = &self.features * a.transpose();
        for (m, mut col) in eta.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = guarded_exp(*v + nu[m], m)?;
            }
        }
        Ok(eta)
    }

    /// Negative log-likelihood (without the `log X!` constant).
    pub fn nll_value(&self, a: &DMatrix<f64>, nu: &DVector<f64>) -> Result<f64> {
        self.check(a, nu)?;
        let eta = &self.features * a.transpose();
        let mut total = 0.0;
        for (m, col) in eta.column_iter().enumerate() {
            for (t, e) in col.iter().enumerate() {
                let e = e + nu[m];
                total += guarded_exp(e, m)? - self.targets[(t, m)] * e;
            }
        }
        Ok(total)
    }

    /// Value and gradients of the negative log-likelihood.
    pub fn nll(&self, a: &DMatrix<f64>, nu: &DVector<f64>) -> Result<NllResult> {
        self.check(a, nu)?;
        let mut resid = &self.features * a.transpose();
        let mut value = 0.0;
        for (m, mut col) in resid.column_iter_mut().enumerate() {
            for (t, v) in col.iter_mut().enumerate() {
                let e = *v + nu[m];
                let lambda = guarded_exp(e, m)?;
                let x = self.targets[(t, m)];
                value += lambda - x * e;
                *v = lambda - x;
            }
        }
        let grad_a = resid.transpose() * &self.features;
        let grad_nu = DVector::from_iterator(resid.ncols(), resid.column_iter().map(|c| c.sum()));
        Ok(NllResult {
            value,
            grad_a,
            grad_nu,
        })
    }

    /// `ε[t, m] = X[t, m] − λ[t, m]`, the negated per-term gradient factor.
    pub fn residuals(&self, a: &DMatrix<f64>, nu: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.targets - self.rates(a, nu)?)
    }
}

#[derive(Debug, Clone)]
pub struct NllResult {
    pub value: f64,
    pub grad_a: DMatrix<f64>,
    pub grad_nu: DVector<f64>,
}

/// Negative log-likelihood of `x` under `model`, summed over every bin with
/// the first bin predicted from the empty history.
pub fn nll(model: &InfluenceModel, x: &CountMatrix) -> Result<NllResult> {
    if x.nodes() != model.nodes() {
        return Err(Error::Dimension(format!(
            "counts have {} nodes, model has {}",
            x.nodes(),
            model.nodes()
        )));
    }
    if x.bins() < 2 {
        return Err(Error::Input("likelihood needs at least 2 bins".into()));
    }
    Design::new(x, &model.basis, &model.saturation)?.nll(&model.a, &model.nu)
}

/// Residuals `ε[t, m]` of `x` under `model`.
pub fn residuals(model: &InfluenceModel, x: &CountMatrix) -> Result<DMatrix<f64>> {
    Design::new(x, &model.basis, &model.saturation)?.residuals(&model.a, &model.nu)
}
