//! Numerical laboratory for the logistic equation driven by the integral
//! fractional Laplacian on an interval with zero exterior condition.
//!
//! The crate is organized around one operator convention: `L` denotes the
//! positive-definite restricted fractional Laplacian `(-Δ)^α`, so the
//! stationary logistic equation reads `L u = a u - b u^p` and the parabolic
//! one `dv/dt + L v = a v - b v^p`.  Everything else — principal
//! eigenvalues, obstacle problems, stochastic checks, limit experiments —
//! is built on top of that single discretization.
//!
//! Module map:
//! - [`core`]: problem description, grids, fields, hypothesis validation;
//! - [`fracop`]: the discrete operator (stencil, apply, energy, Green solve);
//! - [`spectral`]: principal eigenpairs and the potential cut-off experiment;
//! - [`elliptic`]: stationary logistic and obstacle solvers;
//! - [`parabolic`]: time stepping for the logistic and obstacle evolutions;
//! - [`stable_mc`]: independent Monte Carlo checks via stable paths;
//! - [`harness`]: the limit experiments (`p -> ∞`, `t -> ∞`, commutation);
//! - [`report`]: deterministic CSV/JSON serialization;
//! - [`cli`]: the command-line front end.

pub mod cli;
pub mod core;
pub mod elliptic;
pub mod fracop;
pub mod harness;
pub mod parabolic;
pub mod report;
pub mod spectral;
pub mod stable_mc;

use thiserror::Error;

/// Crate-wide error type.  The CLI maps categories onto exit codes, so each
/// variant states which stage of a run failed.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar or structural parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A problem description violates one of the standing hypotheses; the
    /// violated hypothesis is named so configs can be fixed.
    #[error("validation error ({hypothesis}): {detail}")]
    Validation { hypothesis: String, detail: String },

    /// Mismatched vector/grid sizes.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An iteration failed to reach its tolerance or produced an invalid
    /// state; carries the last measured residual when one exists.
    #[error("numerical failure: {what}{}", residual.map(|r| format!(" (residual {r:.3e})")).unwrap_or_default())]
    Numerical { what: String, residual: Option<f64> },

    /// A Monte Carlo estimate is starving: too few paths survive to the
    /// requested window.
    #[error("insufficient surviving paths: {survivors} < {required}")]
    InsufficientPaths { survivors: usize, required: usize },

    /// A run was requested outside the regime it is defined for.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Config file could not be read or parsed.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error: 2 for rejected inputs, 3 for
    /// numerical failures, 1 otherwise (usage errors are handled by the
    /// argument parser before an `Error` exists).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. }
            | Error::Parameter(_)
            | Error::Precondition(_)
            | Error::Config(_) => 2,
            Error::Numerical { .. } | Error::InsufficientPaths { .. } => 3,
            Error::Dimension { .. } | Error::Io(_) => 3,
        }
    }
}
