use thiserror::Error;

/// Failures raised anywhere in the analysis pipeline.
///
/// Variants are grouped by how the CLI reports them: input problems map to
/// exit code 2, failed checks to 1, numerical breakdowns to 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("symmetrizer A0 is not symmetric (asymmetry {0:.3e})")]
    NonSymmetricSymmetrizer(f64),
    #[error("validation failed: {}", .0.join("; "))]
    ValidationFailed(Vec<String>),
    #[error("ambiguous spectrum: eigenvalue {eigenvalue:.3e} lies between tau={tau:.3e} and 10*tau")]
    AmbiguousSpectrum { eigenvalue: f64, tau: f64 },
    #[error("eigenvalue {re:.3e}{im:+.3e}i within {tol:.3e} of the imaginary axis")]
    NearImaginaryEigenvalue { re: f64, im: f64, tol: f64 },
    #[error("matrix is rank deficient (sigma_min {sigma_min:.3e}, tolerance {tol:.3e})")]
    RankDeficient { sigma_min: f64, tol: f64 },
    #[error("numerical rank {found} differs from expected {expected}")]
    RankMismatch { expected: usize, found: usize },
    #[error("Shizuta-Kawashima-like condition violated: R0^T Q R0 is singular")]
    SkConditionViolated,
    #[error("{what}: expected {expected} stable eigenvalues, found {found}")]
    SpectralCountMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("K = A12^T P0 is rank deficient")]
    RankDeficientK,
    #[error("K~^T X K~ is singular")]
    SingularKtXKt,
    #[error("xi I + P0^T C P0 is singular")]
    SingularShift,
    #[error("generalized Kreiss condition failed (min ratio {min_ratio:.3e})")]
    GkcFailed { min_ratio: f64 },
    #[error("(Y2 Y3) has rank {found} < {expected}")]
    DegenerateY { expected: usize, found: usize },
    #[error("closure coefficient is singular")]
    SingularClosure,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("time step {dt:.3e} exceeds CFL limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("boundary extraction matrix is singular (condition {cond:.3e})")]
    BoundarySolveSingular { cond: f64 },
    #[error("frame B is not expressible over frame A (residual {0:.3e})")]
    FrameMismatch(f64),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// CLI exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config(_) | Error::Io(_) | Error::DimensionMismatch(_) => 2,
            Error::ValidationFailed(_)
            | Error::NonSymmetricSymmetrizer(_)
            | Error::SkConditionViolated
            | Error::GkcFailed { .. }
            | Error::AssumptionViolated(_)
            | Error::RankDeficientK
            | Error::DegenerateY { .. } => 1,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
