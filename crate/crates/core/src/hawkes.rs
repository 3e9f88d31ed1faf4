//! Bridge from timestamped events to binned counts.
//!
//! Binning uses half-open intervals `[(t−1)Δ, tΔ)`, `t = 1..⌈horizon/Δ⌉`.
//! A discretely sampled Hawkes process with continuous intensity `λ^{(c)}`
//! has log-likelihood `Σ X log λ^{(c)} − Δ λ^{(c)}`; the Poisson SEPP with
//! `λ = Δ λ^{(c)}` differs from it by `N log Δ`, which does not depend on the
//! model. [`likelihood_gap`] checks that numerically.

use crate::error::{Error, Result};
use crate::model::{CountMatrix, Design, InfluenceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<(f64, usize)>,
    nodes: usize,
    horizon: f64,
}

impl EventLog {
    /// Events are sorted by time (stably) on construction.
    pub fn new(mut events: Vec<(f64, usize)>, nodes: usize, horizon: f64) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::Parameter("event log needs M >= 1".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
        }
        for &(tau, node) in &events {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(Error::Input(format!("event time {tau} is not a nonnegative number")));
            }
            if tau >= horizon {
                return Err(Error::Input(format!("event at {tau} is not before the horizon {horizon}")));
            }
            if node >= nodes {
                return Err(Error::Input(format!("event node {node} out of range for M = {nodes}")));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            events,
            nodes,
            horizon,
        })
    }

    pub fn events(&self) -> &[(f64, usize)] {
        &self.events
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Number of bins of width `delta` covering `[0, horizon)`.
pub fn bin_count(horizon: f64, delta: f64) -> usize {
    ((horizon / delta).ceil() as usize).max(1)
}

pub fn discretize(log: &EventLog, delta: f64) -> Result<CountMatrix> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Parameter(format!("bin width must be positive, got {delta}")));
    }
    let bins = bin_count(log.horizon, delta);
    let mut data = vec![0u32; bins * log.nodes];
    for &(tau, node) in &log.events {
        if tau >= log.horizon {
            return Err(Error::Input(format!("event at {tau} is past the horizon")));
        }
        let t = ((tau / delta).floor() as usize).min(bins - 1);
        data[t * log.nodes + node] += 1;
    }
    let mut x = CountMatrix::new(bins, log.nodes, data)?;
    x.bin_width = Some(delta);
    Ok(x)
}

/// `ℓ_P − ℓ_SH` for one model on the binned log, with both log-likelihoods
/// evaluated independently (`λ` per bin for the Poisson SEPP, `λ/Δ` per unit
/// time for the sampled Hawkes process).
pub fn per_model_gap(log: &EventLog, model: &InfluenceModel, delta: f64) -> Result<f64> {
    let x = discretize(log, delta)?;
    if model.nodes() != log.nodes {
        return Err(Error::Dimension(format!(
            "model has {} nodes, event log {}",
            model.nodes(),
            log.nodes
        )));
    }
    let design = Design::new(&x, &model.basis, &model.saturation)?;
    let rates = design.rates(&model.a, &model.nu)?;
    let (mut poisson, mut sampled) = (0.0, 0.0);
    for (lambda, count) in rates.iter().zip(design.targets.iter()) {
        let continuous = lambda / delta;
        poisson += count * lambda.ln() - lambda;
        sampled += count * continuous.ln() - delta * continuous;
    }
    Ok(poisson - sampled)
}

/// Difference of the per-model gaps of two models; zero in exact arithmetic.
pub fn likelihood_gap(
    log: &EventLog,
    first: &InfluenceModel,
    second: &InfluenceModel,
    delta: f64,
) -> Result<f64> {
    Ok(per_model_gap(log, first, delta)? - per_model_gap(log, second, delta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(events: &[(f64, usize)], nodes: usize, horizon: f64) -> EventLog {
        EventLog::new(events.to_vec(), nodes, horizon).unwrap()
    }

    #[test]
    fn empty_log_gives_zero_bins() {
        let x = discretize(&log(&[], 2, 3.0), 1.0).unwrap();
        assert_eq!((x.bins(), x.nodes(), x.total()), (3, 2, 0));
    }

    #[test]
    fn half_open_bins() {
        let x = discretize(&log(&[(0.5, 0), (1.5, 0)], 1, 2.0), 1.0).unwrap();
        assert_eq!(x.as_slice(), &[1, 1]);
        let x = discretize(&log(&[(1.0, 0)], 1, 2.0), 1.0).unwrap();
        assert_eq!(x.as_slice(), &[0, 1]);
    }

    #[test]
    fn trailing_partial_bin_is_kept() {
        let x = discretize(&log(&[(2.9, 1)], 2, 2.95), 1.0).unwrap();
        assert_eq!(x.bins(), 3);
        assert_eq!(x.get(2, 1), 1);
    }

    #[test]
    fn events_past_horizon_are_rejected() {
        assert!(matches!(EventLog::new(vec![(3.0, 0)], 1, 3.0), Err(Error::Input(_))));
        assert!(matches!(EventLog::new(vec![(1.0, 2)], 2, 3.0), Err(Error::Input(_))));
    }

    #[test]
    fn refinement_consistency() {
        let events: Vec<_> = (0..200).map(|i| ((i * 37 % 997) as f64 * 0.01, i % 3)).collect();
        let l = log(&events, 3, 10.0);
        let fine = discretize(&l, 0.25).unwrap();
        let coarse = discretize(&l, 0.5).unwrap();
        for t in 0..coarse.bins() {
            for m in 0..3 {
                let pair = fine.get(2 * t, m) + if 2 * t + 1 < fine.bins() { fine.get(2 * t + 1, m) } else { 0 };
                assert_eq!(coarse.get(t, m), pair);
            }
        }
        assert_eq!(fine.node_totals(), coarse.node_totals());
    }
}
