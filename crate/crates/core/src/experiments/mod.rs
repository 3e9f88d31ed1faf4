//! Simulation studies: error sweeps, phase transitions, held-out likelihood
//! comparisons and clustering of learned networks.

mod cluster;
mod loglik;
mod sweep;

pub use cluster::{kmeans, spectral_cluster, spectral_embedding};
pub use loglik::{
    baseline_constant, compare_models, evaluate_loglik, evaluate_loglik_with_history, saturated_loglik,
    LoglikComparison,
};
pub use sweep::{
    mse, phase_transition, resolve_regularizer, sweep_mse, transition_midpoint, CellResult, CellSpec,
    DesignFamily, PhaseResult, SweepConfig, SweepResult, TrialOutcome, MSE_THRESHOLD,
};
