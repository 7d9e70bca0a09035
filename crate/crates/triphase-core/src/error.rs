//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by grid construction, field operations, and solvers.
#[derive(Error, Debug)]
pub enum Error {
    /// Grid or field shapes are inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument is outside its admissible range (negative time, bad exponent).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violates a precondition (e.g. incompatible interface traces).
    #[error("data error: {0}")]
    Data(String),

    /// A required piece of state is missing (e.g. stored derivatives).
    #[error("state error: {0}")]
    State(String),

    /// The Picard iteration failed to contract.
    #[error("nonconvergence in window {window}: {detail}")]
    NonConvergence { window: usize, detail: String },

    /// Explicit finite-difference step size violates the stability bound.
    #[error("CFL violation: dt = {dt:.3e} exceeds stable limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
