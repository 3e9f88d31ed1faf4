use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use seppnet::experiments::{
    evaluate_loglik, evaluate_loglik_with_history, phase_transition, resolve_regularizer, saturated_loglik,
    spectral_cluster, sweep_mse, transition_midpoint, DesignFamily, SweepConfig,
};
use seppnet::io::{fmt_f64, matrix_rows, model_from_json, read_counts, read_events, write_counts, ModelFile};
use seppnet::model::{rate_bounds_for, Bounds};
use seppnet::simulate::simulate_with_burn_in;
use seppnet::solver::initial_nu;
use seppnet::theory::{kappa_heatmap, theory_report, LambdaRule, RegKind, ReportOptions};
use seppnet::{
    discretize as bin_events, fit as fit_model, fit_diagonal, make_design, CountMatrix, DesignKind,
    DesignSpec, FitConfig, InfluenceModel, LossScale, RegularizerSpec,
};

use crate::args::{parse_basis, parse_grid, parse_int_grid, parse_lambda, saturation};
use crate::{CliError, Outcome, Output};

/// Bound used for unconstrained fits when none is given.
const FREE_BOUND: f64 = 1e6;
const NU_RANGE: f64 = 20.0;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `SEPPNET_SEED` overrides `--seed`; the default is 0.
fn resolve_seed(arg: Option<u64>) -> Result<u64, CliError> {
    match std::env::var("SEPPNET_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("SEPPNET_SEED={v:?} is not an integer"))),
        Err(_) => Ok(arg.unwrap_or(0)),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| {
        CliError::Core(seppnet::Error::Input(format!("cannot read {}: {e}", path.display())))
    })
}

fn load_model(path: &Path) -> Result<InfluenceModel, CliError> {
    Ok(model_from_json(&read_text(path)?)?)
}

fn load_counts(path: &Path) -> Result<CountMatrix, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Core(seppnet::Error::Input(format!("cannot read {}: {e}", path.display()))))?;
    Ok(read_counts(std::io::BufReader::new(file))?)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Sibling of `out` with `suffix` replacing its extension.
fn sibling(out: Option<&PathBuf>, suffix: &str) -> Option<PathBuf> {
    out.map(|p| p.with_extension(suffix))
}

// ---------------------------------------------------------------- design

#[derive(Args, Debug)]
pub struct DesignArgs {
    /// sparse, block, lowrank, two-rows or hub.
    #[arg(long)]
    kind: String,
    #[arg(long = "M")]
    nodes: usize,
    /// Nonzeros (sparse).
    #[arg(long)]
    s: Option<usize>,
    /// Rank (lowrank).
    #[arg(long)]
    r: Option<usize>,
    /// Hub columns (hub).
    #[arg(long = "s-g")]
    s_g: Option<usize>,
    /// Row positive mass (block, two-rows).
    #[arg(long = "amax")]
    a_max: Option<f64>,
    #[arg(long, default_value_t = -0.7, allow_negative_numbers = true)]
    low: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    high: f64,
    /// Low-rank rescale target for the largest row positive mass; `none` keeps the raw product.
    #[arg(long, default_value = "0.3")]
    target: String,
    #[arg(long, default_value = "geometric:0.25")]
    basis: String,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    tanh: Option<f64>,
    /// Offset shared by all nodes.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    nu: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Serialize)]
struct DesignFile {
    #[serde(flatten)]
    model: ModelFile,
    design: DesignSpec,
}

pub fn design(a: DesignArgs) -> Result<Outcome, CliError> {
    let seed = resolve_seed(a.seed)?;
    let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| usage(format!("--kind {} needs {flag}", a.kind)));
    let need_f = |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(format!("--kind {} needs {flag}", a.kind)));
    let kind = match a.kind.as_str() {
        "sparse" => DesignKind::Sparse { s: need(a.s, "--s")?, low: a.low, high: a.high },
        "block" => DesignKind::Block { a_max: need_f(a.a_max, "--amax")? },
        "lowrank" => DesignKind::LowRank {
            r: need(a.r, "--r")?,
            low: a.low,
            high: a.high,
            target: match a.target.as_str() {
                "none" => None,
                t => Some(t.parse().map_err(|_| usage(format!("bad --target {t}")))?),
            },
        },
        "two-rows" | "two_rows" => DesignKind::TwoRows { a_max: need_f(a.a_max, "--amax")? },
        "hub" => DesignKind::Hub { s_g: need(a.s_g, "--s-g")?, low: a.low, high: a.high },
        other => return Err(usage(format!("unknown design kind `{other}`"))),
    };
    let basis = parse_basis(&a.basis)?;
    let sat = saturation(a.clip, a.tanh)?;
    let spec = DesignSpec { basis_len: basis.len(), ..DesignSpec::new(kind, a.nodes, seed) };
    let matrix = make_design(&spec)?;
    let model = InfluenceModel::with_enclosing_bounds(
        nalgebra::DVector::from_element(a.nodes, a.nu),
        matrix,
        basis,
        sat,
    )?;
    let file = DesignFile { model: ModelFile::from(&model), design: spec.clone() };
    Ok(Outcome {
        main: json_bytes(&file)?,
        extra: vec![],
        seed: Some(seed),
        config: json!({ "design": spec, "basis": model.basis, "saturation": model.saturation, "nu": a.nu }),
        inputs: vec![],
        summary: json!({ "nonzeros": model.a.iter().filter(|v| **v != 0.0).count() }),
    })
}

// -------------------------------------------------------------- simulate

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "T")]
    bins: usize,
    /// Bins simulated and discarded before the recorded ones.
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

pub fn simulate(a: SimulateArgs) -> Result<Outcome, CliError> {
    let seed = resolve_seed(a.seed)?;
    let model = load_model(&a.model)?;
    let x = simulate_with_burn_in(&model, a.bins, seed, a.burn_in)?;
    let mut main = Vec::new();
    write_counts(&x, &mut main)?;
    Ok(Outcome {
        main,
        extra: vec![],
        seed: Some(seed),
        config: json!({ "T": a.bins, "burn_in": a.burn_in }),
        inputs: vec![a.model],
        summary: json!({ "total_events": x.total() }),
    })
}

// ------------------------------------------------------------------- fit

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long, default_value = "geometric:0.25")]
    basis: String,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    tanh: Option<f64>,
    /// none, l1, group, nuclear or l1+nuclear.
    #[arg(long, default_value = "l1")]
    reg: String,
    /// `auto`, a literal, or `theory:C=<c>` (the ℓ₁ weight for l1+nuclear).
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// Nuclear weight for l1+nuclear, same syntax as --lambda.
    #[arg(long, default_value = "auto")]
    lambda_nuclear: String,
    /// Project each iterate onto the constraint set.
    #[arg(long)]
    project: bool,
    /// Fit ν instead of holding it at the log mean count.
    #[arg(long)]
    fit_nu: bool,
    /// Restrict A to self-influence (every node depends only on its own past). Unregularized.
    #[arg(long)]
    diagonal: bool,
    #[arg(long = "amax")]
    a_max: Option<f64>,
    #[arg(long = "amin")]
    a_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    nu_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    nu_max: Option<f64>,
    #[arg(long, default_value_t = FitConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = FitConfig::default().rel_tol)]
    tol: f64,
    /// sum, per_bin or per_observation.
    #[arg(long, default_value = "per_observation")]
    loss_scale: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Serialize)]
struct FitSection {
    regularizer: RegularizerSpec,
    lambda_rule: Value,
    loss_scale: LossScale,
    diagonal: bool,
    iterations: usize,
    converged: bool,
    nu_fitted: bool,
    objective_trace: Vec<f64>,
    decomposition: Option<Value>,
}

#[derive(Serialize)]
struct FitFile {
    #[serde(flatten)]
    model: ModelFile,
    fit: FitSection,
}

fn parse_loss_scale(s: &str) -> Result<LossScale, CliError> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| usage(format!("unknown loss scale `{s}` (sum, per_bin, per_observation)")))
}

pub fn fit(a: FitArgs) -> Result<Outcome, CliError> {
    let x = load_counts(&a.counts)?;
    let basis = parse_basis(&a.basis)?;
    let sat = saturation(a.clip, a.tanh)?;
    let loss_scale = parse_loss_scale(&a.loss_scale)?;
    let cfg = FitConfig {
        max_iters: a.max_iters,
        rel_tol: a.tol,
        fit_nu: a.fit_nu,
        project_feasible: a.project,
        loss_scale,
        ..FitConfig::default()
    };
    if a.project && (a.a_max.is_none() || a.a_min.is_none()) {
        return Err(usage("--project needs --amax and --amin"));
    }
    let bounds = Bounds {
        a_max: a.a_max.unwrap_or(FREE_BOUND),
        a_min: a.a_min.unwrap_or(FREE_BOUND),
        nu_min: a.nu_min.unwrap_or(-NU_RANGE),
        nu_max: a.nu_max.unwrap_or(NU_RANGE),
    };
    bounds.validate()?;
    let (nodes, bins) = (x.nodes(), x.bins());
    let lambda_rule = parse_lambda(&a.lambda)?;
    let nuclear_rule = parse_lambda(&a.lambda_nuclear)?;
    // R_max for theory-mode weights: the a_max bound and the largest offset in play.
    let r_max = || -> Result<f64, CliError> {
        let a_max = a.a_max.ok_or_else(|| usage("theory λ needs --amax to bound R_max"))?;
        let nu_max = if a.fit_nu {
            bounds.nu_max
        } else {
            initial_nu(&x, &bounds).max()
        };
        let b = Bounds { a_max, nu_max, ..bounds };
        Ok(rate_bounds_for(&b, basis.tau() * sat.bound()).1)
    };
    let resolve = |kind: RegKind, rule: LambdaRule| -> Result<f64, CliError> {
        let r = if matches!(rule, LambdaRule::Theory { .. }) { r_max()? } else { 0.0 };
        Ok(match resolve_regularizer(kind, rule, nodes, bins, r, loss_scale) {
            RegularizerSpec::L1 { lambda } | RegularizerSpec::GroupColumn { lambda } | RegularizerSpec::Nuclear { lambda } => lambda,
            _ => unreachable!(),
        })
    };
    let reg = if a.diagonal {
        RegularizerSpec::None
    } else {
        match a.reg.as_str() {
            "none" => RegularizerSpec::None,
            "l1" => RegularizerSpec::L1 { lambda: resolve(RegKind::L1, lambda_rule)? },
            "group" | "group_column" => RegularizerSpec::GroupColumn { lambda: resolve(RegKind::Group, lambda_rule)? },
            "nuclear" => RegularizerSpec::Nuclear { lambda: resolve(RegKind::Nuclear, lambda_rule)? },
            "l1+nuclear" | "l1_plus_nuclear" => RegularizerSpec::L1PlusNuclear {
                lambda_l1: resolve(RegKind::L1, lambda_rule)?,
                lambda_nuclear: resolve(RegKind::Nuclear, nuclear_rule)?,
            },
            other => return Err(usage(format!("unknown regularizer `{other}`"))),
        }
    };
    let result = if a.diagonal {
        fit_diagonal(&x, &basis, &sat, &bounds, &cfg)?
    } else {
        fit_model(&x, &basis, &sat, &reg, &bounds, &cfg)?
    };
    // Bounds recorded with the model: as given, otherwise the tightest ones
    // containing the estimate.
    let tight = Bounds::enclosing(&result.model.a, &result.model.nu);
    let mut model = result.model.clone();
    model.bounds = Bounds {
        a_max: a.a_max.unwrap_or(tight.a_max),
        a_min: a.a_min.unwrap_or(tight.a_min),
        nu_min: a.nu_min.unwrap_or(tight.nu_min),
        nu_max: a.nu_max.unwrap_or(tight.nu_max),
    };
    let file = FitFile {
        model: ModelFile::from(&model),
        fit: FitSection {
            regularizer: reg,
            lambda_rule: json!({ "lambda": lambda_rule, "lambda_nuclear": nuclear_rule }),
            loss_scale,
            diagonal: a.diagonal,
            iterations: result.iterations,
            converged: result.converged,
            nu_fitted: result.nu_fitted,
            objective_trace: result.objective_trace.clone(),
            decomposition: result
                .decomposition
                .as_ref()
                .map(|d| json!({ "low_rank": matrix_rows(&d.low_rank), "sparse": matrix_rows(&d.sparse) })),
        },
    };
    Ok(Outcome {
        main: json_bytes(&file)?,
        extra: vec![],
        seed: None,
        config: json!({
            "basis": basis, "saturation": sat, "regularizer": reg, "bounds": bounds,
            "fit": cfg, "diagonal": a.diagonal,
        }),
        inputs: vec![a.counts],
        summary: json!({
            "iterations": result.iterations, "converged": result.converged,
            "objective": result.objective_trace.last(),
        }),
    })
}

// ------------------------------------------------------------------ eval

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    counts: PathBuf,
    /// Counts preceding --counts; their history seeds the features.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

pub fn eval(a: EvalArgs) -> Result<Outcome, CliError> {
    let model = load_model(&a.model)?;
    let x = load_counts(&a.counts)?;
    let mut inputs = vec![a.model.clone(), a.counts.clone()];
    let loglik = match &a.history {
        Some(h) => {
            inputs.push(h.clone());
            evaluate_loglik_with_history(&model, &load_counts(h)?, &x)?
        }
        None => evaluate_loglik(&model, &x)?,
    };
    let obs = (x.bins() * x.nodes()) as f64;
    let report = json!({
        "loglik": loglik,
        "loglik_per_observation": loglik / obs,
        "saturated_loglik": saturated_loglik(&x),
        "bins": x.bins(),
        "nodes": x.nodes(),
    });
    Ok(Outcome {
        main: json_bytes(&report)?,
        extra: vec![],
        seed: None,
        config: json!({ "history": a.history }),
        inputs,
        summary: report,
    })
}

// ---------------------------------------------------------------- theory

#[derive(Args, Debug)]
pub struct TheoryArgs {
    #[arg(long)]
    model: PathBuf,
    /// l1, group or nuclear.
    #[arg(long, default_value = "l1")]
    reg: String,
    /// Nonzeros of A* (l1).
    #[arg(long)]
    s: Option<f64>,
    /// Hub columns (group).
    #[arg(long = "s-g")]
    s_g: Option<f64>,
    /// Rank (nuclear).
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "T")]
    bins: usize,
    /// `auto`, a literal, or `theory:C=<c>`.
    #[arg(long, default_value = "theory:C=1")]
    lambda: String,
    /// Constant D of the nuclear-norm learning rate.
    #[arg(long, default_value_t = 1.0)]
    d: f64,
    /// Use Ψ instead of Ψ² in the error bound.
    #[arg(long)]
    unsquared_psi: bool,
    #[command(flatten)]
    pub output: Output,
}

pub fn theory(a: TheoryArgs) -> Result<Outcome, CliError> {
    let model = load_model(&a.model)?;
    let kind: RegKind = a.reg.parse()?;
    let structure = match (kind, a.s, a.s_g, a.r) {
        (RegKind::L1, Some(s), None, None) => s,
        (RegKind::Group, None, Some(s), None) => s,
        (RegKind::Nuclear, None, None, Some(r)) => r,
        _ => return Err(usage("give exactly one of --s (l1), --s-g (group) or --r (nuclear), matching --reg")),
    };
    let opts = ReportOptions { rule: parse_lambda(&a.lambda)?, d: a.d, unsquared_psi: a.unsquared_psi };
    let report = theory_report(&model, kind, structure, a.bins, &opts)?;
    Ok(Outcome {
        main: json_bytes(&report)?,
        extra: vec![],
        seed: None,
        config: json!({ "reg": kind, "structure": structure, "T": a.bins, "lambda": opts.rule, "d": a.d, "unsquared_psi": a.unsquared_psi }),
        inputs: vec![a.model],
        summary: json!({ "mse_bound": report.mse_bound, "t_min": report.t_min, "vacuous": report.vacuous }),
    })
}

// --------------------------------------------------------------- heatmap

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    /// a_max grid, e.g. `0:1:0.02`.
    #[arg(long = "amax")]
    a_max: String,
    /// Clip thresholds, e.g. `3:30` or `3,6,12`.
    #[arg(long)]
    u: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    nu_max: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Also write the κ = level contour to `<out stem>.contour.csv`.
    #[arg(long)]
    contour: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

fn contour_csv(points: &[(u32, f64)]) -> Vec<u8> {
    let mut s = String::from("u,a_max\n");
    for (u, a) in points {
        s.push_str(&format!("{u},{}\n", fmt_f64(*a)));
    }
    s.into_bytes()
}

pub fn heatmap(a: HeatmapArgs) -> Result<Outcome, CliError> {
    let grid = parse_grid(&a.a_max)?;
    let us: Vec<u32> = parse_int_grid(&a.u)?;
    let map = kappa_heatmap(&grid, &us, a.nu_max, a.alpha)?;
    let mut main = String::from("u,a_max,kappa\n");
    for (i, u) in map.u.iter().enumerate() {
        for (j, am) in map.a_max.iter().enumerate() {
            main.push_str(&format!("{u},{},{}\n", fmt_f64(*am), fmt_f64(map.values[i][j])));
        }
    }
    let mut extra = vec![];
    let mut summary = json!({});
    if let Some(level) = a.contour {
        let points = map.contour(level);
        summary = json!({ "contour_level": level, "contour_points": points.len() });
        match sibling(a.output.out.as_ref(), "contour.csv") {
            Some(path) => extra.push((path, contour_csv(&points))),
            None => {
                main.push('\n');
                main.push_str(&String::from_utf8(contour_csv(&points)).expect("ascii"));
            }
        }
    }
    Ok(Outcome {
        main: main.into_bytes(),
        extra,
        seed: None,
        config: json!({ "a_max": grid, "u": us, "nu_max": a.nu_max, "alpha": a.alpha, "contour": a.contour }),
        inputs: vec![],
        summary,
    })
}

// ----------------------------------------------------------- sweep/phase

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Nodes.
    #[arg(long = "M")]
    nodes: Option<usize>,
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    alpha: Option<f64>,
    /// True offset of every node.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    nu: f64,
    /// l1, group or nuclear (default by design).
    #[arg(long)]
    reg: Option<String>,
    /// `auto`, a literal, or `theory:C=<c>`.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long)]
    fit_nu: bool,
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
    /// A trial is accurate when its squared Frobenius error is below this.
    #[arg(long, default_value_t = seppnet::experiments::MSE_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// sparse, lowrank, hub, block or two-rows.
    #[arg(long)]
    design: String,
    /// Nonzeros (sparse).
    #[arg(long)]
    s: Option<String>,
    /// Ranks (lowrank).
    #[arg(long)]
    r: Option<String>,
    /// Hub columns (hub).
    #[arg(long = "s-g")]
    s_g: Option<String>,
    /// a_max values (block, two-rows).
    #[arg(long = "amax")]
    a_max: Option<String>,
    #[arg(long = "T")]
    bins: String,
    #[arg(long, default_value = "6")]
    u: String,
    #[command(flatten)]
    study: StudyArgs,
    #[command(flatten)]
    pub output: Output,
}

fn family(name: &str) -> Result<(DesignFamily, RegKind), CliError> {
    Ok(match name {
        "sparse" => (DesignFamily::sparse(), RegKind::L1),
        "lowrank" => (DesignFamily::low_rank(), RegKind::Nuclear),
        "hub" => (
            DesignFamily::Hub { low: seppnet::simulate::DEFAULT_RANGE.0, high: seppnet::simulate::DEFAULT_RANGE.1 },
            RegKind::Group,
        ),
        "block" => (DesignFamily::Block, RegKind::L1),
        "two-rows" | "two_rows" => (DesignFamily::TwoRows, RegKind::Nuclear),
        other => return Err(usage(format!("unknown design `{other}`"))),
    })
}

fn study_config(
    fam: DesignFamily,
    default_reg: RegKind,
    params: Vec<f64>,
    bins: Vec<usize>,
    u: Vec<f64>,
    s: &StudyArgs,
    defaults: (usize, f64),
) -> Result<SweepConfig, CliError> {
    let seed = resolve_seed(s.seed)?;
    let mut cfg = SweepConfig::new(fam, params, bins, s.trials, seed);
    cfg.u = u;
    cfg.nodes = s.nodes.unwrap_or(defaults.0);
    cfg.alpha = s.alpha.unwrap_or(defaults.1);
    cfg.nu = s.nu;
    cfg.reg = match &s.reg {
        Some(r) => r.parse()?,
        None => default_reg,
    };
    cfg.rule = parse_lambda(&s.lambda)?;
    cfg.fit.fit_nu = s.fit_nu;
    cfg.burn_in = s.burn_in;
    cfg.threshold = s.threshold;
    cfg.validate()?;
    Ok(cfg)
}

pub fn sweep(a: SweepArgs) -> Result<Outcome, CliError> {
    let (fam, reg) = family(&a.design)?;
    let given: Vec<&String> = [&a.s, &a.r, &a.s_g, &a.a_max].into_iter().flatten().collect();
    let [grid] = given.as_slice() else {
        return Err(usage("give exactly one of --s, --r, --s-g or --amax"));
    };
    let params = parse_grid(grid)?;
    let bins: Vec<usize> = parse_int_grid(&a.bins)?;
    let cfg = study_config(fam, reg, params, bins, parse_grid(&a.u)?, &a.study, (20, 0.25))?;
    let result = sweep_mse(&cfg)?;
    let mut main = Vec::new();
    result.write_csv(&mut main)?;
    let failed: usize = result.cells.iter().map(|c| c.failed).sum();
    Ok(Outcome {
        main,
        extra: vec![],
        seed: Some(cfg.seed),
        config: serde_json::to_value(&cfg)?,
        inputs: vec![],
        summary: json!({ "cells": result.cells.len(), "failed_trials": failed }),
    })
}

#[derive(Args, Debug)]
pub struct PhaseArgs {
    /// block, or lowrank (two orthogonal generating rows).
    #[arg(long)]
    design: String,
    /// a_max grid, e.g. `0:0.6:0.02`.
    #[arg(long = "amax")]
    a_max: String,
    #[arg(long, default_value = "6")]
    u: String,
    #[arg(long = "T", default_value_t = 400)]
    bins: usize,
    /// Also write the κ = level contour to `<out stem>.contour.csv`.
    #[arg(long)]
    contour: Option<f64>,
    #[command(flatten)]
    study: StudyArgs,
    #[command(flatten)]
    pub output: Output,
}

pub fn phase(a: PhaseArgs) -> Result<Outcome, CliError> {
    let (fam, reg) = match a.design.as_str() {
        "block" => (DesignFamily::Block, RegKind::L1),
        "lowrank" | "two-rows" | "two_rows" => (DesignFamily::TwoRows, RegKind::Nuclear),
        other => return Err(usage(format!("phase studies use the block or lowrank design, got `{other}`"))),
    };
    let cfg = study_config(fam, reg, parse_grid(&a.a_max)?, vec![a.bins], parse_grid(&a.u)?, &a.study, (50, 0.0))?;
    let result = phase_transition(&cfg)?;
    let mut main = Vec::new();
    result.sweep.write_csv(&mut main)?;
    let midpoints: Vec<Value> = cfg
        .u
        .iter()
        .map(|&u| json!({ "u": u, "midpoint": transition_midpoint(&result.sweep, a.bins, u) }))
        .collect();
    let mut extra = vec![];
    if let Some(level) = a.contour {
        let points = result.heatmap.contour(level);
        if let Some(path) = sibling(a.output.out.as_ref(), "contour.csv") {
            extra.push((path, contour_csv(&points)));
        }
    }
    Ok(Outcome {
        main,
        extra,
        seed: Some(cfg.seed),
        config: serde_json::to_value(&cfg)?,
        inputs: vec![],
        summary: json!({ "transition_midpoints": midpoints }),
    })
}

// ------------------------------------------------------------ discretize

#[derive(Args, Debug)]
pub struct DiscretizeArgs {
    #[arg(long)]
    events: PathBuf,
    /// Bin width in seconds.
    #[arg(long)]
    delta: f64,
    #[arg(long = "M")]
    nodes: usize,
    /// Observation window end; defaults to the first whole second after the last event.
    #[arg(long)]
    horizon: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

pub fn discretize(a: DiscretizeArgs) -> Result<Outcome, CliError> {
    let file = fs::File::open(&a.events)
        .map_err(|e| CliError::Core(seppnet::Error::Input(format!("cannot read {}: {e}", a.events.display()))))?;
    let log = read_events(std::io::BufReader::new(file), a.nodes, a.horizon)?;
    let x = bin_events(&log, a.delta)?;
    let mut main = Vec::new();
    write_counts(&x, &mut main)?;
    Ok(Outcome {
        main,
        extra: vec![],
        seed: None,
        config: json!({ "delta": a.delta, "M": a.nodes, "horizon": log.horizon() }),
        inputs: vec![a.events],
        summary: json!({ "events": log.len(), "bins": x.bins() }),
    })
}

// --------------------------------------------------------------- cluster

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    pub output: Output,
}

pub fn cluster(a: ClusterArgs) -> Result<Outcome, CliError> {
    let model = load_model(&a.model)?;
    let labels = spectral_cluster(&model.a, a.k)?;
    let mut main = String::from("node,label\n");
    for (node, label) in labels.iter().enumerate() {
        main.push_str(&format!("{node},{label}\n"));
    }
    Ok(Outcome {
        main: main.into_bytes(),
        extra: vec![],
        seed: None,
        config: json!({ "k": a.k }),
        inputs: vec![a.model],
        summary: json!({ "clusters": a.k }),
    })
}
