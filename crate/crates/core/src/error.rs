use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter `{param}` for model `{model}`: {reason}")]
    InvalidParameter {
        model: String,
        param: String,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: achieved relative error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("moment order {order} exceeds the supported maximum {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("bound {bound} is inapplicable: {}", violations.join("; "))]
    Inapplicable {
        bound: String,
        violations: Vec<String>,
    },

    #[error("budget {budget:.6e} unreachable on [{lo:.3e}, {hi:.3e}]: smallest bound value is {min_value:.6e}")]
    BudgetUnreachable {
        budget: f64,
        lo: f64,
        hi: f64,
        min_value: f64,
    },

    #[error("bound {bound} is not monotone in eps between {eps_a:.4e} ({value_a:.6e}) and {eps_b:.4e} ({value_b:.6e})")]
    NonMonotone {
        bound: String,
        eps_a: f64,
        value_a: f64,
        eps_b: f64,
        value_b: f64,
    },

    #[error("invalid path configuration: {0}")]
    InvalidConfig(String),

    #[error("supremum requested but the batch was simulated without record_supremum")]
    SupremumNotRecorded,

    #[error("payoff `{payoff}` cannot be evaluated on this batch: {reason}")]
    PayoffMismatch { payoff: String, reason: String },

    #[error("divergent integrand: {0}")]
    Divergent(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("i/o error on `{path}`: {message}")]
    Io { path: String, message: String },

    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(model: &str, param: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            model: model.to_string(),
            param: param.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
