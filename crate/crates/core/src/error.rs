use thiserror::Error;

/// Errors raised by the spectral and kernel routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integration at lambda = {lambda} did not converge: error estimate {estimate:.3e} > tolerance {tolerance:.3e}")]
    IntegrationDiverged {
        lambda: f64,
        estimate: f64,
        tolerance: f64,
    },
    #[error("band edge pairing failed near lambda = {lambda}: {reason}")]
    EdgePairingFailed { lambda: f64, reason: String },
    #[error("quasimomentum is not monotone inside band {band}")]
    NonMonotonic { band: usize },
    #[error("k = {k} lies within {distance:.3e} of a band edge (exclusion {exclusion:.3e})")]
    TooCloseToEdge { k: f64, distance: f64, exclusion: f64 },
    #[error("Floquet eigenvector is ill-conditioned at band {band}, k = {k}")]
    DegenerateFloquet { band: usize, k: f64 },
    #[error("phase derivative is not monotone on [{k_lo}, {k_hi}]")]
    NonMonotonePhase { k_lo: f64, k_hi: f64 },
    #[error("panel budget of {budget} exceeded")]
    BudgetExceeded { budget: usize },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
