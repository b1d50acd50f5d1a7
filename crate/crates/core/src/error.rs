use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("empty file")]
    EmptyFile,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize },
    #[error("invalid channel matrix: {0}")]
    InvalidMatrix(String),
    #[error("epoch [{start}, {end}) out of range for {len} samples")]
    OutOfRange { start: usize, end: usize, len: usize },
    #[error("epoch of {len} samples is shorter than the minimum usable length {min}")]
    EpochTooShort { len: usize, min: usize },
    #[error("series of length {len} too short (need more than {need})")]
    SeriesTooShort { len: usize, need: usize },

    #[error("series too short for spectral estimation: {len} < {need}")]
    TooShort { len: usize, need: usize },
    #[error("channel {0} has zero variance")]
    ZeroVarianceChannel(usize),
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("every regressor is linearly dependent")]
    AllColumnsDropped,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("regime too small: {n1} / {n2} observations, need {min} each")]
    RegimeTooSmall { n1: usize, n2: usize, min: usize },
    #[error("no candidate threshold gives a feasible split")]
    NoFeasibleSplit,
    #[error("TAR fit has zero residual sum of squares")]
    ZeroResidual,
    #[error("empty candidate grid")]
    EmptyGrid,
    #[error("empty p-value list")]
    EmptyList,
    #[error("p-value {0} outside (0, 1]")]
    InvalidPValue(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("inconsistent subject sets: {0}")]
    InconsistentSubjectSets(String),
    #[error("unknown format `{0}`")]
    UnknownFormat(String),
    #[error("simulated sample is not finite or exceeds 1e8 at t={0}")]
    NonFiniteSample(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Coarse class of an error, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    /// Attaches the file being read, unless the error already names it.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Io { .. } | Error::InFile { .. } => self,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InFile { source, .. } => source.kind(),
            Error::InvalidConfig(_) | Error::UnknownFormat(_) | Error::EmptyGrid => ErrorKind::Config,
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::EmptyFile
            | Error::MissingColumn(_)
            | Error::NonNumericCell { .. }
            | Error::InvalidMatrix(_)
            | Error::OutOfRange { .. }
            | Error::EpochTooShort { .. }
            | Error::SeriesTooShort { .. }
            | Error::TooShort { .. }
            | Error::ZeroVarianceChannel(_)
            | Error::InconsistentSubjectSets(_)
            | Error::DimensionMismatch(_) => ErrorKind::Data,
            _ => ErrorKind::Numeric,
        }
    }
}
