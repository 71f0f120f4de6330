use std::path::PathBuf;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "quadrature did not converge: error estimate {estimate:.3e} exceeds tolerance {tolerance:.3e} after {evaluations} panel evaluations"
    )]
    Quadrature {
        estimate: f64,
        tolerance: f64,
        evaluations: usize,
    },

    #[error("coincident filaments (zero separation, same loop); use self_inductance for the regularized self term")]
    CoincidentFilaments,

    #[error(
        "impedance matrix is singular or ill-conditioned (condition estimate {condition:.3e})"
    )]
    SingularSystem { condition: f64 },

    #[error("zero impedance in reflected-impedance denominator")]
    ZeroImpedance,

    #[error("frame error: {0}")]
    Frame(String),

    #[error("bit sequence has odd length {0}; 1-out-of-4 coding needs bit pairs")]
    OddBitCount(usize),

    #[error("sample rate {rate} Hz is below the required {required} Hz")]
    SampleRate { rate: f64, required: f64 },

    #[error("response decode failed: quality {quality:.3} below threshold {threshold:.3}")]
    DecodeFailure { quality: f64, threshold: f64 },

    #[error("no synchronization: correlation peak {peak:.3} below threshold {threshold:.3}")]
    NoSync { peak: f64, threshold: f64 },

    #[error("range [{start}, {end}) exceeds trace length {len}")]
    OutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("trace is identically zero")]
    AllZeroTrace,

    #[error("segment length {actual} does not match expected {expected}")]
    SegmentLength { expected: usize, actual: usize },

    #[error("encoder weights invalid at layer {layer} ({name}): {reason}")]
    Shape {
        layer: usize,
        name: String,
        reason: String,
    },

    #[error("pooled covariance is singular after maximum jitter (numerical rank {rank} of {dim})")]
    SingularCovariance { rank: usize, dim: usize },

    #[error("impostor set for class {0} is empty")]
    EmptyImpostorSet(usize),

    #[error("empty evaluation set")]
    EmptyEvaluation,

    #[error("access to target labels denied outside evaluation")]
    LabelAccessDenied,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidArgument(_) | Config(_) | OddBitCount(_) | SampleRate { .. } => {
                ErrorKind::Config
            }
            Quadrature { .. }
            | CoincidentFilaments
            | SingularSystem { .. }
            | ZeroImpedance
            | SingularCovariance { .. } => ErrorKind::Numerical,
            Frame(_)
            | DecodeFailure { .. }
            | NoSync { .. }
            | OutOfRange { .. }
            | AllZeroTrace
            | SegmentLength { .. }
            | Shape { .. }
            | EmptyImpostorSet(_)
            | EmptyEvaluation
            | LabelAccessDenied
            | Io { .. }
            | Format { .. } => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
