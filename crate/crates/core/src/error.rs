use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Physics,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("classical limit has no quantum drive scale (sigma = 0)")]
    ClassicalLimit,
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),
    #[error("coherent amplitude {amplitude:.4} needs at least {required} levels, got {dim}")]
    TruncationTail { amplitude: f64, dim: usize, required: usize },
    #[error("truncation leak at tau = {tau:.6}: top {mode} level holds {population:.3e}")]
    TruncationLeak { tau: f64, mode: &'static str, population: f64 },
    #[error("step size underflow at t = {t:.6} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("norm collapse at tau = {tau:.6}: norm {norm:.3e} before renormalization")]
    NormCollapse { tau: f64, norm: f64 },
    #[error("series too short: {0}")]
    SeriesTooShort(String),
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),
    #[error("insufficient grid extent: {0}")]
    GridExtent(String),
    #[error("operator is not Hermitian")]
    NonHermitian,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{failed} of {total} trajectories failed, above the failure budget: {first}")]
    EnsembleFailure {
        failed: usize,
        total: usize,
        first: String,
        /// Category of the first failure.
        cause: ErrorKind,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_)
            | Error::ClassicalLimit
            | Error::InvalidTruncation(_)
            | Error::TruncationTail { .. }
            | Error::GridExtent(_)
            | Error::InsufficientSampling(_)
            | Error::SeriesTooShort(_)
            | Error::Config(_) => ErrorKind::Config,
            Error::TruncationLeak { .. } => ErrorKind::Physics,
            Error::EnsembleFailure { cause, .. } => *cause,
            Error::StepUnderflow { .. }
            | Error::TooManySteps(_)
            | Error::NoConvergence { .. }
            | Error::NormCollapse { .. }
            | Error::NonHermitian
            | Error::Dimension(_) => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
        }
    }

    /// Process exit code: 2 config, 3 physics abort, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config | ErrorKind::Io => 2,
            ErrorKind::Physics => 3,
            ErrorKind::Numerical => 4,
        }
    }
}
