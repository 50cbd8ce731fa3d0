use std::path::PathBuf;

use crate::symmetry::PosetNode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("gain must be a finite positive real, got {0}")]
    InvalidGain(f64),

    #[error("matrix is not a rotation: max |R^T R - I| = {orthogonality:e}, det = {det}")]
    InvalidRotation { orthogonality: f64, det: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("bin count k = {k} out of range [1, {max}] for window length {len}")]
    InvalidBinCount { k: usize, max: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("morphisms do not compose: {first_target} is not {second_source}")]
    NotComposable {
        first_target: PosetNode,
        second_source: PosetNode,
    },

    #[error("node mismatch: morphism expects {expected}, data lives at {found}")]
    NodeMismatch {
        expected: PosetNode,
        found: PosetNode,
    },

    #[error("group elements act on different window lengths ({0} vs {1})")]
    PeriodMismatch(usize, usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: file is empty", .0.display())]
    EmptyFile(PathBuf),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("row count mismatch: {} has {left_rows} rows but {} has {right_rows}", left.display(), right.display())]
    RowCountMismatch {
        left: PathBuf,
        left_rows: usize,
        right: PathBuf,
        right_rows: usize,
    },

    #[error("checksum mismatch: expected {expected}, got {actual}")]
    Checksum { expected: String, actual: String },

    #[error("download failed after {attempts} attempts: {message}")]
    Network { attempts: usize, message: String },

    #[error("archive error: {0}")]
    Archive(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("non-finite objective or gradient at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("training labels contain a single class ({0}); at least two are required")]
    SingleClass(u8),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The underlying error with any stage wrappers removed.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root_cause(),
            other => other,
        }
    }

    /// Errors caused by bad arguments or configuration rather than by data.
    pub fn is_usage(&self) -> bool {
        matches!(
            self.root_cause(),
            Error::Config(_)
                | Error::Unsupported(_)
                | Error::InvalidBinCount { .. }
                | Error::InvalidGain(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
