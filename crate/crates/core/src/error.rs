//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, fitting and reconstruction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The GKS coefficient matrix fails Hermiticity beyond tolerance.
    #[error("coefficient matrix is not Hermitian (max asymmetry {max_asymmetry:.3e})")]
    NonHermitianF { max_asymmetry: f64 },

    /// `c` lies outside the range of `A`; no steady state exists. Cannot
    /// occur for models built from physical specs.
    #[error("no steady state: c is outside range(A) (residual {residual:.3e})")]
    SteadyStateInconsistent { residual: f64 },

    /// A trajectory value implies a measurement probability outside [0, 1].
    #[error("probability out of range: component value {value:.6} at t = {time:.6}")]
    ProbabilityOutOfRange { time: f64, value: f64 },

    /// The design matrix at the fit optimum is rank-deficient.
    #[error("degenerate fit: {0}")]
    FitDegenerate(String),

    /// Every optimisation start converged to a residual above threshold.
    #[error("fit failed: best residual {residual:.3e} exceeds {threshold:.3e}")]
    FitFailed { residual: f64, threshold: f64 },

    /// The eigenvector matrix assembled from signal coefficients is singular,
    /// i.e. the initial state lacked overlap with some eigenvector.
    #[error("singular eigenvector matrix: {0}")]
    SingularS(String),

    /// Paired coefficient vectors are inconsistent with conjugate symmetry.
    #[error("conjugate-pair coefficients inconsistent: {0}")]
    ConjugacyViolation(String),

    /// Signal term degrees contradict the declared degeneracy case.
    #[error("signal terms contradict declared case: {0}")]
    CaseMismatch(String),

    /// The Laplace sample matrix is singular (bad s-point choice).
    #[error("singular sample matrix: {0}")]
    SingularC(String),

    /// The signal basis contains terms with no rational Laplace form of the
    /// expected degree (polynomial-envelope terms).
    #[error("unsupported basis for Laplace transform: {0}")]
    UnsupportedBasis(String),

    /// Prior/initial-state combination without a structural coefficient system.
    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    /// All solver seeds exceeded the residual threshold.
    #[error("no convergence: best residual {residual:.3e} exceeds {threshold:.3e}")]
    NoConvergence { residual: f64, threshold: f64 },

    /// Multiple non-equivalent parameter sets fit within tolerance.
    #[error("ambiguous solution: {candidates} distinct parameter sets fit within tolerance")]
    AmbiguousSolution { candidates: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
