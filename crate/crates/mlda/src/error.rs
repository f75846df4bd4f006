//! Error types shared across the crate.

use thiserror::Error;

/// Failure while evaluating a posterior density.
#[derive(Debug, Error)]
pub enum EvalError {
    /// The forward model could not produce an output (e.g. the ODE
    /// integrator underflowed its step size). Carries a description of
    /// where the model gave up.
    #[error("forward model failed: {0}")]
    ForwardFailed(String),
    /// The forward model returned a non-finite value. Carries the state
    /// that triggered it.
    #[error("non-finite forward output at state {state:?}")]
    NonFinite { state: Vec<f64> },
}

/// Failure while constructing a hierarchy or sampler.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{0}")]
    Invalid(String),
    #[error("requested {requested} KL modes but only {available} eigenvalues exceed tolerance")]
    InsufficientRank { requested: usize, available: usize },
}

/// Failure while starting or running a chain.
#[derive(Debug, Error)]
pub enum SamplerError {
    /// The initial state has a non-finite log-density.
    #[error("initial state has non-finite log-density at level {level}")]
    Startup { level: usize },
    #[error("initial state could not be evaluated at level {level}: {source}")]
    StartupEval {
        level: usize,
        source: EvalError,
    },
    #[error("{0}")]
    Config(String),
}

/// Failure while reading or writing persisted artifacts.
#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

/// Failure in a chain diagnostic.
#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("series is constant; autocorrelation undefined")]
    ConstantSeries,
    #[error("need at least {needed} draws, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series contains non-finite values")]
    NonFinite,
}
