use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested logarithm leaves the principal branch (rotation angle at or past the cut locus).
    #[error("logarithm outside the principal branch (angle {angle})")]
    Branch { angle: f64 },

    #[error("{what} failed to converge (residual {residual:e})")]
    Numerical { what: &'static str, residual: f64 },

    #[error("bridge resampling gave up after {attempts} attempts")]
    ResampleExhausted { attempts: u32 },

    #[error("observations outside the log branch at indices {indices:?}")]
    ObservationsOutsideBranch { indices: Vec<usize> },

    #[error("all k-point weights underflowed at step {step} (max log weight {max_log_weight})")]
    WeightUnderflow { step: usize, max_log_weight: f64 },
}

/// Non-fatal conditions reported alongside results.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Warning {
    #[error("no proposal accepted in {window} iterations from iteration {from}; try a proposal scale below {scale}")]
    ChainStalled { from: usize, window: usize, scale: f64 },

    #[error("SPD projection clipped eigenvalues in {projected} of {iterations} iterations")]
    FrequentProjection { projected: usize, iterations: usize },

    #[error("non-finite log-likelihood at iteration {iteration}; optimisation stopped")]
    NonFiniteLikelihood { iteration: usize },
}
