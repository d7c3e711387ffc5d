use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("file contains no samples: {0}")]
    EmptyFile(PathBuf),

    #[error("unknown activity code `{0}`")]
    UnknownActivityCode(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("downsampling exponent {0} outside [0, 7]")]
    AlphaOutOfRange(u32),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("geometry mismatch: expected {expected} values per axis, found {found}")]
    GeometryMismatch { expected: usize, found: usize },

    #[error("frame is already normalized")]
    AlreadyNormalized,

    #[error("frame is not normalized")]
    NotNormalized,

    #[error("frame has no normalization parameters to invert")]
    MissingNormParams,

    #[error("need at least {needed} training pairs, got {found}")]
    TooFewPairs { needed: usize, found: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("need at least {needed} training points, got {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("leave-one-subject-out needs at least two subjects, found {0}")]
    SingleSubject(usize),

    #[error("leakage: test subject `{subject}` reached {stage}")]
    Leakage { stage: &'static str, subject: String },

    #[error("bad {what} record: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an I/O failure on `path`; a missing file maps to `MissingFile`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    /// Short stable identifier, used by the command line for machine-parsable
    /// error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "missing_file",
            Error::Io { .. } => "io",
            Error::MalformedRow { .. } => "malformed_row",
            Error::EmptyFile(_) => "empty_file",
            Error::UnknownActivityCode(_) => "unknown_activity_code",
            Error::InvalidSample(_) => "invalid_sample",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::AlphaOutOfRange(_) => "alpha_out_of_range",
            Error::EmptyInput(_) => "empty_input",
            Error::GeometryMismatch { .. } => "geometry_mismatch",
            Error::AlreadyNormalized => "already_normalized",
            Error::NotNormalized => "not_normalized",
            Error::MissingNormParams => "missing_norm_params",
            Error::TooFewPairs { .. } => "too_few_pairs",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::SingleClass => "single_class",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::SingleSubject(_) => "single_subject",
            Error::Leakage { .. } => "leakage",
            Error::Format { .. } => "format",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
