use alloc::string::String;

/// Errors produced anywhere in the recognition pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("malformed PGM header: {0}")]
    MalformedHeader(&'static str),
    #[error("PGM maxval {0} exceeds 255")]
    MaxvalTooLarge(u32),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("label sets differ between models")]
    LabelMismatch,
    #[error("probe is not a face: distance from face space {dffs} exceeds {threshold}")]
    NotAFace { dffs: f64, threshold: f64 },
    #[error("matrix is not symmetric")]
    Asymmetric,
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("eigensolver did not converge for eigenvalue {index}")]
    NonConvergence { index: usize },
    #[error("matrix is singular or indefinite (pivot {pivot})")]
    SingularOrIndefinite { pivot: usize },
    #[error("no variance left: every eigenpair fell below the cutoff")]
    NoVariance,
    #[error("within-class scatter stays singular after ridge regularization")]
    DegenerateScatter,
    #[error("forward recursion underflowed in iteration {iteration}")]
    Underflow { iteration: usize },
    #[error("no feasible state path")]
    Infeasible,
}

impl Error {
    /// True for failures of the numerical kernels rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Asymmetric
                | Error::NonFinite
                | Error::NonConvergence { .. }
                | Error::SingularOrIndefinite { .. }
                | Error::NoVariance
                | Error::DegenerateScatter
                | Error::Underflow { .. }
                | Error::Infeasible
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
