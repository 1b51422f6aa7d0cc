//! Multilevel Monte Carlo for SDEs with additive noise `dX = b(X) dt + dW`.
//!
//! * [`model`]: drift families, payoffs, problem definition, assumption checks.
//! * [`constants`]: the explicit non-asymptotic constants.
//! * [`simulate`]: coupled Euler schemes, the estimator, Malliavin derivatives.
//! * [`optimize`]: bias/MSE bounds and the cost-optimal level and sample sizes.
//! * [`validate`]: Monte Carlo checks of every bound.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod validate;

pub use constants::{ConstantsBundle, ConstantsOptions, DeviationConstants, LevelFactor};
pub use error::{Error, Result};
pub use model::{DriftModel, Payoff, ProblemSpec};
pub use optimize::{BoostedPlan, OptimalPlan};
pub use simulate::{EstimatorOutput, LevelPlan};
pub use validate::{BoundCheckReport, GridPoint, Verdict};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
