//! Saturated self-exciting Poisson point processes on networks.
//!
//! * [`model`] — counts, bases, saturation, rates and the likelihood;
//! * [`simulate`] — ground-truth designs and forward simulation;
//! * [`solver`] — proximal-gradient estimation under ℓ₁ / group / nuclear penalties;
//! * [`theory`] — closed-form constants, recommended λ and error bounds;
//! * [`hawkes`] — event-log discretization and the likelihood bridge;
//! * [`experiments`] — sweeps, phase transitions, held-out likelihood, clustering.

pub mod error;
pub mod exec;
pub mod experiments;
pub mod hawkes;
pub mod io;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
pub use exec::Execution;
pub use hawkes::{discretize, likelihood_gap, EventLog};
pub use model::{
    features_update, nll, rate_bounds, rates, BasisSet, Bounds, CountMatrix, Design, FeatureVector,
    InfluenceModel, Saturation,
};
pub use simulate::{clip_rate, make_design, simulate, DesignKind, DesignSpec};
pub use solver::{fit, fit_diagonal, FitConfig, FitResult, LossScale, RegularizerSpec};
