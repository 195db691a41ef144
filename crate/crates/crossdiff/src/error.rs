//! Crate-wide error type and the CLI exit-code classification.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A structural hypothesis on the model data is violated at build time.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// Inversion of the entropy gradient did not converge.
    #[error("entropy-variable inversion failed after {iterations} iterations \
             (residual {residual:.3e})")]
    InversionFailed {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    /// A state point left the admissible region where the operation is defined.
    #[error("state outside the admissible region: {0}")]
    BoundaryState(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    /// The implicit step could not be accepted even at the smallest step size.
    #[error("time step failed at t = {time:.6e}: {reason}")]
    StepFailed { time: f64, reason: String },

    /// Discrete Neumann problems need a zero-mean right side.
    #[error("H^-1 seminorm needs a zero-mean input (discrete mean = {0:.3e})")]
    NonzeroMean(f64),

    #[error("lattice integration unstable: {0}")]
    LatticeUnstable(String),

    /// Decay fitting requires strictly positive distances on the fit window.
    #[error("fit window unusable: {0}")]
    FitWindow(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code for the CLI: 2 for configuration problems, 3 for numerical
    /// failures. Invariant-audit failures exit with 1 but are not errors;
    /// they are reported by the experiment drivers.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
