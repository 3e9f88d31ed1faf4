//! Regularized maximum-likelihood estimation of `(A, ν)`.
//!
//! Proximal gradient with Barzilai–Borwein (spectral) steps and monotone
//! backtracking, i.e. SpaRSA with the monotone safeguard. The objective is
//!
//! ```text
//! F(A, ν) = w · nll(A, ν) + penalty(A)
//! ```
//!
//! where the weight `w` is set by [`LossScale`].

mod project;
mod prox;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use project::{project_feasible, project_nonneg_l1_ball};
pub use prox::{penalty, prox, soft_threshold, RegularizerSpec};

use crate::error::{Error, Result};
use crate::model::{Bounds, CountMatrix, Design, InfluenceModel, BasisSet, Saturation};

const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 1e10;
/// Floor on the mean count used to initialise `ν`.
const NU_INIT_FLOOR: f64 = 1e-3;

/// Normalisation of the negative log-likelihood inside the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossScale {
    /// Raw sum over bins and nodes.
    Sum,
    /// Divided by the number of bins `T`.
    PerBin,
    /// Divided by the number of observations `T·M`.
    #[default]
    PerObservation,
}

impl LossScale {
    pub fn weight(self, bins: usize, nodes: usize) -> f64 {
        match self {
            LossScale::Sum => 1.0,
            LossScale::PerBin => 1.0 / bins as f64,
            LossScale::PerObservation => 1.0 / (bins * nodes) as f64,
        }
    }

    /// Converts a weight calibrated for the per-bin objective into this scale.
    pub fn from_per_bin(self, lambda: f64, bins: usize, nodes: usize) -> f64 {
        lambda * self.weight(bins, nodes) * bins as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub step_init: f64,
    pub bb_step: bool,
    pub backtrack_factor: f64,
    pub fit_nu: bool,
    pub project_feasible: bool,
    pub loss_scale: LossScale,
    /// Recorded for provenance of a run; the solver itself is deterministic.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_tol: 1e-8,
            step_init: 1.0,
            bb_step: true,
            backtrack_factor: 0.5,
            fit_nu: false,
            project_feasible: false,
            loss_scale: LossScale::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be >= 1".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Parameter("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(Error::Parameter("step_init must be positive".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::Parameter("rel_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Low-rank plus sparse split of an `l1+nuclear` fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: InfluenceModel,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub nu_fitted: bool,
    pub decomposition: Option<Decomposition>,
}

/// `ν⁰ = log(max(mean, 1e−3))` clamped into `[ν_min, ν_max]`.
pub fn initial_nu(x: &CountMatrix, bounds: &Bounds) -> DVector<f64> {
    DVector::from_iterator(
        x.nodes(),
        x.node_means()
            .into_iter()
            .map(|m| m.max(NU_INIT_FLOOR).ln().clamp(bounds.nu_min, bounds.nu_max)),
    )
}

pub fn fit(
    x: &CountMatrix,
    basis: &BasisSet,
    sat: &Saturation,
    reg: &RegularizerSpec,
    bounds: &Bounds,
    cfg: &FitConfig,
) -> Result<FitResult> {
    check_inputs(x, bounds, cfg)?;
    let design = Design::new(x, basis, sat)?;
    fit_design(&design, &initial_nu(x, bounds), reg, bounds, cfg, false)
}

/// Fit restricted to diagonal influence: every node depends only on its own
/// history (through every basis function). Unregularized.
pub fn fit_diagonal(
    x: &CountMatrix,
    basis: &BasisSet,
    sat: &Saturation,
    bounds: &Bounds,
    cfg: &FitConfig,
) -> Result<FitResult> {
    check_inputs(x, bounds, cfg)?;
    let design = Design::new(x, basis, sat)?;
    fit_design(&design, &initial_nu(x, bounds), &RegularizerSpec::None, bounds, cfg, true)
}

fn check_inputs(x: &CountMatrix, bounds: &Bounds, cfg: &FitConfig) -> Result<()> {
    if x.bins() < 2 {
        return Err(Error::Input("fitting needs at least 2 bins".into()));
    }
    bounds.validate()?;
    cfg.validate()
}

/// Fit on a precomputed design starting from `A = 0`, `ν = nu0`.
pub fn fit_design(
    design: &Design,
    nu0: &DVector<f64>,
    reg: &RegularizerSpec,
    bounds: &Bounds,
    cfg: &FitConfig,
    diagonal: bool,
) -> Result<FitResult> {
    reg.validate()?;
    cfg.validate()?;
    if nu0.len() != design.nodes() {
        return Err(Error::Dimension("initial ν has the wrong length".into()));
    }
    let smooth = Smooth {
        design,
        weight: cfg.loss_scale.weight(design.bins(), design.nodes()),
        diagonal,
    };
    let zero = DMatrix::zeros(design.nodes(), design.feature_len());
    let blocks = match *reg {
        RegularizerSpec::L1PlusNuclear {
            lambda_l1,
            lambda_nuclear,
        } => vec![
            Block::new(zero.clone(), RegularizerSpec::L1 { lambda: lambda_l1 }, cfg.fit_nu, cfg.step_init),
            Block::new(zero, RegularizerSpec::Nuclear { lambda: lambda_nuclear }, false, cfg.step_init),
        ],
        simple => vec![Block::new(zero, simple, cfg.fit_nu, cfg.step_init)],
    };
    let project = cfg.project_feasible && blocks.len() == 1;
    let mut solver = Solver {
        smooth,
        blocks,
        nu: nu0.clone(),
        bounds: *bounds,
        cfg: cfg.clone(),
        project,
    };
    let (trace, iterations, converged) = solver.run()?;

    let decomposition = (solver.blocks.len() == 2).then(|| Decomposition {
        sparse: solver.blocks[0].value.clone(),
        low_rank: solver.blocks[1].value.clone(),
    });
    let model = InfluenceModel::new(
        solver.nu.clone(),
        solver.a(),
        design.basis.clone(),
        design.saturation,
        *bounds,
    )?;
    Ok(FitResult {
        model,
        objective_trace: trace,
        iterations,
        converged,
        nu_fitted: cfg.fit_nu,
        decomposition,
    })
}

struct Smooth<'a> {
    design: &'a Design,
    weight: f64,
    diagonal: bool,
}

struct Eval {
    value: f64,
    grad_a: DMatrix<f64>,
    grad_nu: DVector<f64>,
}

impl Smooth<'_> {
    /// Weighted nll and gradient; `None` when a rate overflows.
    fn eval(&self, a: &DMatrix<f64>, nu: &DVector<f64>) -> Result<Option<Eval>> {
        let r = match self.design.nll(a, nu) {
            Ok(r) => r,
            Err(Error::RateOverflow { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut grad_a = r.grad_a * self.weight;
        if self.diagonal {
            let m = self.design.nodes();
            for ((i, j), v) in grad_a.iter_mut().enumerate().map(|(idx, v)| ((idx % m, idx / m), v)) {
                if j % m != i {
                    *v = 0.0;
                }
            }
        }
        Ok(Some(Eval {
            value: r.value * self.weight,
            grad_a,
            grad_nu: r.grad_nu * self.weight,
        }))
    }
}

struct Block {
    value: DMatrix<f64>,
    reg: RegularizerSpec,
    updates_nu: bool,
    step: f64,
    pen: f64,
}

impl Block {
    fn new(value: DMatrix<f64>, reg: RegularizerSpec, updates_nu: bool, step: f64) -> Self {
        Self {
            value,
            reg,
            updates_nu,
            step,
            pen: 0.0,
        }
    }
}

struct Solver<'a> {
    smooth: Smooth<'a>,
    blocks: Vec<Block>,
    nu: DVector<f64>,
    bounds: Bounds,
    cfg: FitConfig,
    project: bool,
}

impl Solver<'_> {
    fn a(&self) -> DMatrix<f64> {
        let mut a = self.blocks[0].value.clone();
        for b in &self.blocks[1..] {
            a += &b.value;
        }
        a
    }

    fn total_penalty(&self) -> f64 {
        self.blocks.iter().map(|b| b.pen).sum()
    }

    fn run(&mut self) -> Result<(Vec<f64>, usize, bool)> {
        for b in &mut self.blocks {
            b.pen = penalty(&b.reg, &b.value)?;
        }
        let mut current = self
            .smooth
            .eval(&self.a(), &self.nu)?
            .ok_or_else(|| Error::Numeric("rate overflow at the initial point".into()))?;
        let mut objective = current.value + self.total_penalty();
        if !objective.is_finite() {
            return Err(Error::Numeric(format!("initial objective is {objective}")));
        }
        let mut trace = vec![objective];
        for iter in 1..=self.cfg.max_iters {
            let start = objective;
            let mut moved = false;
            for k in 0..self.blocks.len() {
                if let Some((next, value)) = self.block_step(k, &current, objective)? {
                    current = next;
                    objective = value;
                    moved = true;
                }
            }
            if !objective.is_finite() {
                return Err(Error::Numeric(format!("objective became {objective}")));
            }
            trace.push(objective);
            if !moved || (start - objective) <= self.cfg.rel_tol * start.abs().max(1.0) {
                return Ok((trace, iter, true));
            }
        }
        Ok((trace, self.cfg.max_iters, false))
    }

    /// One backtracking prox-gradient step on block `k`. Returns the new
    /// smooth evaluation and objective if a non-increasing step was found.
    fn block_step(&mut self, k: usize, current: &Eval, objective: f64) -> Result<Option<(Eval, f64)>> {
        let other_pen = self.total_penalty() - self.blocks[k].pen;
        let rest = self.a() - &self.blocks[k].value;
        let updates_nu = self.blocks[k].updates_nu;
        let mut step = self.blocks[k].step;
        loop {
            let block = &self.blocks[k];
            let z = &block.value - &current.grad_a * step;
            let mut trial = prox(&block.reg, &z, step)?;
            if self.project {
                trial = project_feasible(&trial, self.bounds.a_max, self.bounds.a_min);
            }
            let nu_trial = if updates_nu {
                (&self.nu - &current.grad_nu * step).map(|v| v.clamp(self.bounds.nu_min, self.bounds.nu_max))
            } else {
                self.nu.clone()
            };
            let a_trial = &rest + &trial;
            if let Some(eval) = self.smooth.eval(&a_trial, &nu_trial)? {
                let pen = penalty(&block.reg, &trial)?;
                let value = eval.value + pen + other_pen;
                if value <= objective {
                    let next_step = if self.cfg.bb_step {
                        bb_step(&trial, &block.value, &nu_trial, &self.nu, &eval, current, updates_nu)
                            .unwrap_or(step * 2.0)
                    } else {
                        step
                    };
                    let block = &mut self.blocks[k];
                    block.value = trial;
                    block.pen = pen;
                    block.step = next_step.clamp(MIN_STEP, MAX_STEP);
                    self.nu = nu_trial;
                    return Ok(Some((eval, value)));
                }
            }
            step *= self.cfg.backtrack_factor;
            if step < MIN_STEP {
                // No decrease is possible at any admissible step: the
                // iterate is stationary to working precision.
                self.blocks[k].step = MIN_STEP;
                return Ok(None);
            }
        }
    }
}

/// BB1 step `⟨s, s⟩ / ⟨s, y⟩`; `None` when the curvature estimate is not positive.
fn bb_step(
    a_new: &DMatrix<f64>,
    a_old: &DMatrix<f64>,
    nu_new: &DVector<f64>,
    nu_old: &DVector<f64>,
    new: &Eval,
    old: &Eval,
    with_nu: bool,
) -> Option<f64> {
    let s = a_new - a_old;
    let y = &new.grad_a - &old.grad_a;
    let mut ss = s.norm_squared();
    let mut sy = s.dot(&y);
    if with_nu {
        let s_nu = nu_new - nu_old;
        let y_nu = &new.grad_nu - &old.grad_nu;
        ss += s_nu.norm_squared();
        sy += s_nu.dot(&y_nu);
    }
    (sy > 0.0 && ss > 0.0).then(|| ss / sy)
}
