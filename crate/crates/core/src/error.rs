use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags or configuration values.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// The numerical procedure could not produce a result.
    Numeric,
    /// Filesystem or store failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error(
        "system matrix is singular or numerically rank-deficient (ridge = {ridge:e}); \
         raise the ridge (e.g. --ridge 1e-3) or supply more pairs"
    )]
    SingularSystem { ridge: f64 },

    #[error("gradient descent diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: &'static str },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("id {0:?} contains a line break")]
    InvalidId(String),

    #[error("unknown {kind} id {id:?}")]
    UnknownId { kind: &'static str, id: String },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("nothing to calibrate: neither queries nor corpus given")]
    NothingToCalibrate,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("{path}: bad magic bytes")]
    BadMagic { path: PathBuf },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u8 },

    #[error("{path}: reserved header bytes are nonzero")]
    ReservedBytes { path: PathBuf },

    #[error("{path}: unsupported dtype code {dtype}")]
    UnsupportedDtype { path: PathBuf, dtype: u8 },

    #[error("{path}: file length {actual} does not match header (expected {expected})")]
    BadLength {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("{path}: {ids} ids for {rows} rows")]
    IdCountMismatch {
        path: PathBuf,
        ids: usize,
        rows: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate judgment for ({qid:?}, {did:?})")]
    DuplicateJudgment {
        path: PathBuf,
        line: usize,
        qid: String,
        did: String,
    },

    #[error("operator for domain {0:?} already exists (use force to overwrite)")]
    AlreadyExists(String),

    #[error("no operator stored for domain {0:?}")]
    NotFound(String),

    #[error("invalid domain id {0:?}")]
    InvalidDomain(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed metadata: {source}")]
    Meta {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidConfig(_) | InvalidDomain(_) | NothingToCalibrate => ErrorKind::Usage,
            SingularSystem { .. } | Diverged { .. } => ErrorKind::Numeric,
            Io { .. } | AlreadyExists(_) | NotFound(_) => ErrorKind::Io,
            DimensionMismatch { .. }
            | EmptyInput(_)
            | InvalidSpec(_)
            | DuplicateId(_)
            | InvalidId(_)
            | UnknownId { .. }
            | NonFiniteEntry { .. }
            | EmptyCorpus
            | BadMagic { .. }
            | UnsupportedVersion { .. }
            | UnsupportedDtype { .. }
            | ReservedBytes { .. }
            | BadLength { .. }
            | ChecksumMismatch { .. }
            | IdCountMismatch { .. }
            | Parse { .. }
            | DuplicateJudgment { .. }
            | Meta { .. } => ErrorKind::Data,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
