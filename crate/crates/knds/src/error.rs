use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Input outside the mathematical domain of the operation (r <= 0, bad range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters fail the non-degeneracy classification.
    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    /// A numerical procedure failed (root polish, ordering, sign condition, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Incompatible option combination (sector/branch mismatch, missing channel, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// An internal identity that should hold by construction failed; indicates a
    /// formula transcription bug, not a user error.
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    /// Evaluation at a pole of a rational coefficient.
    #[error("pole encountered: {0}")]
    Pole(String),

    /// Newton continuation in the spin parameter diverged.
    #[error("spin too large: {0}")]
    SpinTooLarge(String),

    /// The reduction's 3x3 solve is singular at some radius.
    #[error("degenerate reduction: {0}")]
    DegenerateReduction(String),

    /// Frobenius indicial exponents collide (logarithmic case).
    #[error("indicial degeneracy: {0}")]
    IndicialDegeneracy(String),

    /// Contour sampling could not bring phase increments below pi/2.
    #[error("contour resolution exhausted: {0}")]
    ContourResolution(String),

    /// Newton continuation in sigma diverged.
    #[error("continuation failure: {0}")]
    Continuation(String),

    /// Fixed-point iteration did not converge within the iteration budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Conformal factor left the positive cone during iteration.
    #[error("conformal factor collapse: {0}")]
    ConformalFactorCollapse(String),

    /// Computed spectrum does not match the predicted eigenvalue multiset.
    #[error("eigenvalue set mismatch: {0}")]
    LemmaMismatch(String),

    /// I/O failure (CLI layer).
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 usage, 3 degenerate/domain, 4 numerical, 5 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Domain(_) | Error::Degenerate(_) => 3,
            Error::Io(_) => 5,
            _ => 4,
        }
    }
}
