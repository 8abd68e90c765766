use std::path::PathBuf;

/// Errors raised by every module in the crate.
///
/// Each variant has a stable name (see [`Error::name`]) that the CLI prints as
/// a message prefix, so scripts can match on it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("requested k={requested} exceeds numerical rank r={rank}; retry with k <= {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("invalid k={requested}: must satisfy 1 <= k <= {dim}")]
    InvalidK { requested: usize, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),

    #[error("zero-norm vector")]
    ZeroVector,

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("bad magic {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("payload truncated: header declares {expected} bytes, file holds {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("{found} trailing bytes after the declared payload")]
    TrailingData { found: u64 },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("line {line}: cannot parse {text:?} as a number")]
    ParseError { line: usize, text: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable variant name, used as the CLI message prefix.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "NonFinite",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::EmptyInput(_) => "EmptyInput",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::InvalidK { .. } => "InvalidK",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::ZeroVector => "ZeroVector",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::BadMagic { .. } => "BadMagic",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::UnsupportedDtype(_) => "UnsupportedDtype",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::TrailingData { .. } => "TrailingData",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::ParseError { .. } => "ParseError",
            Error::Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { expected, found }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
