//! Small-jump approximation of Lévy processes.
//!
//! Truncation (`X^ε`) and Gaussian substitution (`X̂^ε`) of the jumps below ε,
//! the functionals that control their error, explicit error bounds, a coupled
//! Monte Carlo path engine and estimators to check the bounds empirically.

// `!(x > 0.0)` is how NaN is rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod jump_metrics;
pub mod levy_models;
pub mod quadrature;
pub mod stats;
pub mod study;

pub use bounds::{evaluate_bound, epsilon_for_budget, BoundId, BoundInputs, BoundParams, BoundReport, BoundValue, ConstantMode};
pub use engine::{build_sampler, simulate_coupled, simulate_ladder, simulate_paths, JumpSampler, PathBatch, PathConfig, Scheme};
pub use error::{Error, Result};
pub use estimators::{MCEstimate, PayoffSpec};
pub use jump_metrics::{beta_profiles, r_moments, small_jump_metrics, BetaProfile, RMomentTable, SmallJumpMetrics};
pub use levy_models::{make_model, GeneratingTriplet, LevyMeasure, ModelSpec};
