use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::io::fmt_f64;
use crate::model::{rate_bounds, BasisSet, Bounds, InfluenceModel, Saturation};
use crate::rng::derive_seed;
use crate::simulate::{clip_rate, make_design, simulate_with_burn_in, DesignKind, DesignSpec, DEFAULT_LOWRANK_TARGET, DEFAULT_RANGE};
use crate::solver::{fit, FitConfig, LossScale, RegularizerSpec};
use crate::theory::{kappa_cell, kappa_heatmap, recommended_lambda, threshold, KappaHeatmap, LambdaRule, RegKind};

/// A trial is accurate when `‖Â − A*‖²_F` is below this.
pub const MSE_THRESHOLD: f64 = 1.0;
/// Half-width of the `ν` range when `ν` is fitted in a study.
const NU_SLACK: f64 = 20.0;

/// Squared Frobenius error.
pub fn mse(a_hat: &DMatrix<f64>, a_star: &DMatrix<f64>) -> f64 {
    (a_hat - a_star).norm_squared()
}

/// A design kind with its swept parameter left open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignFamily {
    /// Parameter: number of nonzeros `s`.
    Sparse { low: f64, high: f64 },
    /// Parameter: `a_max`.
    Block,
    /// Parameter: rank `r`.
    LowRank { low: f64, high: f64, target: Option<f64> },
    /// Parameter: `a_max`.
    TwoRows,
    /// Parameter: number of hub columns `s_G`.
    Hub { low: f64, high: f64 },
}

impl DesignFamily {
    pub fn sparse() -> Self {
        DesignFamily::Sparse {
            low: DEFAULT_RANGE.0,
            high: DEFAULT_RANGE.1,
        }
    }

    pub fn low_rank() -> Self {
        DesignFamily::LowRank {
            low: DEFAULT_RANGE.0,
            high: DEFAULT_RANGE.1,
            target: Some(DEFAULT_LOWRANK_TARGET),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DesignFamily::Sparse { .. } => "sparse",
            DesignFamily::Block => "block",
            DesignFamily::LowRank { .. } => "lowrank",
            DesignFamily::TwoRows => "two_rows",
            DesignFamily::Hub { .. } => "hub",
        }
    }

    /// Whether the swept parameter is `a_max` (so a `κ` value applies).
    pub fn sweeps_a_max(&self) -> bool {
        matches!(self, DesignFamily::Block | DesignFamily::TwoRows)
    }

    pub fn kind(&self, param: f64) -> Result<DesignKind> {
        let count = |p: f64| {
            if p >= 0.0 && p.fract() == 0.0 {
                Ok(p as usize)
            } else {
                Err(Error::Parameter(format!("design parameter {p} must be a nonnegative integer")))
            }
        };
        Ok(match *self {
            DesignFamily::Sparse { low, high } => DesignKind::Sparse { s: count(param)?, low, high },
            DesignFamily::Block => DesignKind::Block { a_max: param },
            DesignFamily::LowRank { low, high, target } => DesignKind::LowRank {
                r: count(param)?,
                low,
                high,
                target,
            },
            DesignFamily::TwoRows => DesignKind::TwoRows { a_max: param },
            DesignFamily::Hub { low, high } => DesignKind::Hub { s_g: count(param)?, low, high },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub family: DesignFamily,
    /// Swept design parameter (`s`, `r`, `s_G` or `a_max`).
    pub params: Vec<f64>,
    pub bins: Vec<usize>,
    /// Clip thresholds `Ũ`.
    pub u: Vec<f64>,
    pub trials: usize,
    pub nodes: usize,
    pub alpha: f64,
    /// True offset, shared by all nodes.
    pub nu: f64,
    pub reg: RegKind,
    pub rule: LambdaRule,
    pub fit: FitConfig,
    pub threshold: f64,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl SweepConfig {
    /// Defaults of the sparse study: `M = 20`, `Ũ = 6`, `α = 0.25`, `ν = 0`.
    pub fn new(family: DesignFamily, params: Vec<f64>, bins: Vec<usize>, trials: usize, seed: u64) -> Self {
        Self {
            family,
            params,
            bins,
            u: vec![6.0],
            trials,
            nodes: 20,
            alpha: 0.25,
            nu: 0.0,
            reg: RegKind::L1,
            rule: LambdaRule::Practical,
            fit: FitConfig::default(),
            threshold: MSE_THRESHOLD,
            burn_in: 0,
            seed,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() || self.bins.is_empty() || self.u.is_empty() {
            return Err(Error::Parameter("sweep grids must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be >= 1".into()));
        }
        if self.bins.iter().any(|&t| t < 2) {
            return Err(Error::Parameter("every T must be >= 2".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Parameter("MSE threshold must be positive".into()));
        }
        for &p in &self.params {
            let spec = DesignSpec::new(self.family.kind(p)?, self.nodes, 0);
            spec.validate()?;
        }
        for &u in &self.u {
            Saturation::clip(u).validate()?;
        }
        BasisSet::Geometric { alpha: self.alpha }.validate()?;
        self.fit.validate()
    }

    fn cells(&self) -> Vec<CellSpec> {
        let mut cells = Vec::new();
        for (pi, &param) in self.params.iter().enumerate() {
            for &bins in &self.bins {
                for &u in &self.u {
                    cells.push(CellSpec {
                        param,
                        param_index: pi,
                        bins,
                        u,
                    });
                }
            }
        }
        cells
    }
}

/// Regularizer for a study: the practical and fixed rules are used as
/// weights of the configured objective directly; the theory rule is
/// calibrated for the per-bin objective and converted.
pub fn resolve_regularizer(
    kind: RegKind,
    rule: LambdaRule,
    nodes: usize,
    bins: usize,
    r_max: f64,
    scale: LossScale,
) -> RegularizerSpec {
    let mut lambda = recommended_lambda(kind, rule, nodes, bins, r_max);
    if matches!(rule, LambdaRule::Theory { .. }) {
        lambda = scale.from_per_bin(lambda, bins, nodes);
    }
    match kind {
        RegKind::L1 => RegularizerSpec::L1 { lambda },
        RegKind::Group => RegularizerSpec::GroupColumn { lambda },
        RegKind::Nuclear => RegularizerSpec::Nuclear { lambda },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub param: f64,
    pub param_index: usize,
    pub bins: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub mse: Option<f64>,
    pub clip_rate: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: CellSpec,
    /// `κ` of the cell; only defined for families that sweep `a_max`.
    pub kappa: Option<f64>,
    pub trials: Vec<TrialOutcome>,
    pub failed: usize,
    pub median: f64,
    pub std: f64,
    pub frac_above: f64,
    pub frac_below: f64,
    pub mean_clip_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
}

fn run_trial(cfg: &SweepConfig, cell: &CellSpec, trial: usize) -> TrialOutcome {
    let base = [cell.param_index as u64, trial as u64];
    let design_seed = derive_seed(cfg.seed, &[base[0], base[1], 0]);
    let sim_seed = derive_seed(cfg.seed, &[base[0], base[1], 1]);
    let mut clip = f64::NAN;
    let outcome = (|| -> Result<(f64, usize, bool)> {
        let kind = cfg.family.kind(cell.param)?;
        let a_star = make_design(&DesignSpec::new(kind, cfg.nodes, design_seed))?;
        let model = InfluenceModel::with_enclosing_bounds(
            DVector::from_element(cfg.nodes, cfg.nu),
            a_star.clone(),
            BasisSet::Geometric { alpha: cfg.alpha },
            Saturation::clip(cell.u),
        )?;
        let x = simulate_with_burn_in(&model, cell.bins, sim_seed, cfg.burn_in)?;
        clip = clip_rate(&x, threshold(cell.u));
        let (_, r_max) = rate_bounds(&model);
        let reg = resolve_regularizer(cfg.reg, cfg.rule, cfg.nodes, cell.bins, r_max, cfg.fit.loss_scale);
        let slack = if cfg.fit.fit_nu { NU_SLACK } else { 0.0 };
        let bounds = Bounds {
            nu_min: cfg.nu - slack,
            nu_max: cfg.nu + slack,
            ..model.bounds
        };
        let result = fit(&x, &model.basis, &model.saturation, &reg, &bounds, &cfg.fit)?;
        Ok((mse(&result.model.a, &a_star), result.iterations, result.converged))
    })();
    match outcome {
        Ok((mse, iterations, converged)) => TrialOutcome {
            mse: Some(mse),
            clip_rate: clip,
            iterations,
            converged,
            error: None,
        },
        Err(e) => TrialOutcome {
            mse: None,
            clip_rate: clip,
            iterations: 0,
            converged: false,
            error: Some(format!("{}: {e}", e.code())),
        },
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

fn summarize(cfg: &SweepConfig, spec: CellSpec, trials: Vec<TrialOutcome>) -> CellResult {
    let mut mses: Vec<f64> = trials.iter().filter_map(|t| t.mse).collect();
    mses.sort_by(f64::total_cmp);
    let n = mses.len() as f64;
    let mean = mses.iter().sum::<f64>() / n;
    let std = if mses.len() > 1 {
        (mses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let clips: Vec<f64> = trials.iter().map(|t| t.clip_rate).filter(|c| c.is_finite()).collect();
    let kappa = cfg
        .family
        .sweeps_a_max()
        .then(|| kappa_cell(spec.param, threshold(spec.u), cfg.nu, cfg.alpha));
    CellResult {
        spec,
        kappa,
        failed: trials.len() - mses.len(),
        median: median(&mses),
        std,
        frac_above: mses.iter().filter(|&&v| v > cfg.threshold).count() as f64 / n,
        frac_below: mses.iter().filter(|&&v| v < cfg.threshold).count() as f64 / n,
        mean_clip_rate: clips.iter().sum::<f64>() / clips.len() as f64,
        trials,
    }
}

/// Generate, simulate, fit and score `trials` instances per grid cell.
///
/// Trial `i` of parameter index `p` uses the same ground truth and the same
/// random streams in every `(T, Ũ)` cell, so cells differ only in the axis
/// being varied. Output is identical for every thread count.
pub fn sweep_mse(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let cells = cfg.cells();
    let n = cells.len() * cfg.trials;
    let mut outcomes = map_indexed(n, cfg.exec, |i| run_trial(cfg, &cells[i / cfg.trials], i % cfg.trials)).into_iter();
    let cells = cells
        .into_iter()
        .map(|spec| {
            let trials: Vec<_> = outcomes.by_ref().take(cfg.trials).collect();
            summarize(cfg, spec, trials)
        })
        .collect();
    Ok(SweepResult {
        config: cfg.clone(),
        cells,
    })
}

impl SweepResult {
    pub fn cell(&self, param: f64, bins: usize, u: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.spec.param == param && c.spec.bins == bins && c.spec.u == u)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "design",
            "param",
            "T",
            "u",
            "kappa",
            "trials",
            "failed",
            "median_mse",
            "std_mse",
            "frac_above",
            "frac_below",
            "mean_clip_rate",
        ])?;
        for c in &self.cells {
            wtr.write_record([
                self.config.family.name().to_string(),
                fmt_f64(c.spec.param),
                c.spec.bins.to_string(),
                fmt_f64(c.spec.u),
                c.kappa.map(fmt_f64).unwrap_or_default(),
                c.trials.len().to_string(),
                c.failed.to_string(),
                fmt_f64(c.median),
                fmt_f64(c.std),
                fmt_f64(c.frac_above),
                fmt_f64(c.frac_below),
                fmt_f64(c.mean_clip_rate),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub sweep: SweepResult,
    pub heatmap: KappaHeatmap,
}

/// Accuracy over an `(a_max, Ũ)` grid at a single `T`, joined with `κ` on
/// the same grid.
pub fn phase_transition(cfg: &SweepConfig) -> Result<PhaseResult> {
    if !cfg.family.sweeps_a_max() {
        return Err(Error::Parameter("phase transitions sweep a_max: use the block or two-row design".into()));
    }
    if cfg.bins.len() != 1 {
        return Err(Error::Parameter("phase transitions use a single T".into()));
    }
    let sweep = sweep_mse(cfg)?;
    let us: Vec<u32> = cfg.u.iter().map(|&u| threshold(u)).collect();
    let heatmap = kappa_heatmap(&cfg.params, &us, cfg.nu, cfg.alpha)?;
    Ok(PhaseResult { sweep, heatmap })
}

/// `a_max` at which the fraction of inaccurate trials first reaches one
/// half, linearly interpolated, for the given `Ũ` and `T`.
pub fn transition_midpoint(sweep: &SweepResult, bins: usize, u: f64) -> Option<f64> {
    let row: Vec<(f64, f64)> = sweep
        .cells
        .iter()
        .filter(|c| c.spec.bins == bins && c.spec.u == u)
        .map(|c| (c.spec.param, c.frac_above))
        .collect();
    let first = row.first()?;
    if first.1 >= 0.5 {
        return Some(first.0);
    }
    row.windows(2).find(|w| w[1].1 >= 0.5).map(|w| {
        let (a0, f0) = w[0];
        let (a1, f1) = w[1];
        a0 + (0.5 - f0) / (f1 - f0) * (a1 - a0)
    })
}
