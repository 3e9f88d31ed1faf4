//! Parsers for compound option values.

use seppnet::theory::LambdaRule;
use seppnet::{BasisSet, Saturation};

use crate::CliError;

/// `geometric:<alpha>`, `lags:<p>` or `table:<v,v,..>/<v,..>` (one kernel per
/// `/`-separated group).
pub fn parse_basis(s: &str) -> Result<BasisSet, CliError> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let basis = match kind {
        "geometric" => BasisSet::Geometric {
            alpha: if rest.is_empty() { 0.0 } else { number(rest)? },
        },
        "lags" => BasisSet::Lags {
            p: rest.parse().map_err(|_| usage(format!("bad lag count in `{s}`")))?,
        },
        "table" => BasisSet::Table {
            values: rest
                .split('/')
                .map(|k| k.split(',').map(number).collect::<Result<Vec<_>, _>>())
                .collect::<Result<_, _>>()?,
        },
        _ => return Err(usage(format!("unknown basis `{s}` (geometric:<alpha>, lags:<p>, table:<..>)"))),
    };
    basis.validate()?;
    Ok(basis)
}

pub fn saturation(clip: Option<f64>, tanh: Option<f64>) -> Result<Saturation, CliError> {
    let sat = match (clip, tanh) {
        (Some(_), Some(_)) => return Err(usage("--clip and --tanh are mutually exclusive")),
        (_, Some(u)) => Saturation::Tanh { u },
        (Some(u), None) => Saturation::clip(u),
        (None, None) => Saturation::clip(6.0),
    };
    sat.validate()?;
    Ok(sat)
}

/// `auto`, a literal value, or `theory:C=<c>`.
pub fn parse_lambda(s: &str) -> Result<LambdaRule, CliError> {
    if s == "auto" {
        return Ok(LambdaRule::Practical);
    }
    if let Some(rest) = s.strip_prefix("theory") {
        let c = match rest.strip_prefix(":C=").or_else(|| rest.strip_prefix(":c=")) {
            Some(c) => number(c)?,
            None if rest.is_empty() => 1.0,
            None => return Err(usage(format!("bad λ rule `{s}` (expected theory:C=<c>)"))),
        };
        return Ok(LambdaRule::Theory { c });
    }
    let value = number(s)?;
    if !(value >= 0.0) {
        return Err(usage(format!("λ must be >= 0, got {value}")));
    }
    Ok(LambdaRule::Fixed { value })
}

/// Comma-separated items, each a number or an inclusive range
/// `start:end[:step]` (step 1 by default).
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|i| !i.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(number(v)?),
            [a, b] | [a, b, _] => {
                let (start, end) = (number(a)?, number(b)?);
                let step = if parts.len() == 3 { number(parts[2])? } else { 1.0 };
                if !(step > 0.0) || end < start {
                    return Err(usage(format!("bad range `{item}`")));
                }
                // Index-based so that no rounding error accumulates.
                let n = ((end - start) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| tidy(start + i as f64 * step)));
            }
            _ => return Err(usage(format!("bad grid item `{item}`"))),
        }
    }
    if out.is_empty() {
        return Err(usage(format!("empty grid `{s}`")));
    }
    Ok(out)
}

pub fn parse_int_grid<T: TryFrom<u64>>(s: &str) -> Result<Vec<T>, CliError> {
    parse_grid(s)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                T::try_from(v as u64).map_err(|_| usage(format!("{v} out of range")))
            } else {
                Err(usage(format!("expected a nonnegative integer, got {v}")))
            }
        })
        .collect()
}

/// Strips the last-digit noise of `start + i·step`.
fn tidy(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

fn number(s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| usage(format!("`{s}` is not a finite number")))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
