use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Training,
    Transport,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: expected dimension {expected}, got {found}")]
    Shape { expected: usize, found: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("margin undefined for a zero weight vector")]
    UndefinedMargin,

    #[error("non-finite input {0}")]
    Domain(f64),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("featurizer fingerprint mismatch: model expects {expected}, got {found}")]
    Compatibility { expected: String, found: String },

    #[error("report join error: {0}")]
    Join(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("generation failed: no valid pairs out of {requested} requests")]
    GenerationFailed { requested: usize },

    #[error("labeling failed: all {count} pairs were dropped")]
    LabelingFailed { count: usize },

    #[error("could not bind mock server: {0}")]
    Bind(std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::Io { .. } | Error::Bind(_) => ErrorKind::Io,
            Error::Parse { .. }
            | Error::Integrity(_)
            | Error::Format(_)
            | Error::Lookup(_)
            | Error::Compatibility { .. }
            | Error::Join(_)
            | Error::Json(_)
            | Error::Shape { .. }
            | Error::Domain(_) => ErrorKind::Data,
            Error::Split(_) | Error::Config(_) | Error::Precondition(_) => ErrorKind::Config,
            Error::Degenerate(_)
            | Error::Training(_)
            | Error::Divergence { .. }
            | Error::UndefinedMargin => ErrorKind::Training,
            Error::Transport(_)
            | Error::GenerationFailed { .. }
            | Error::LabelingFailed { .. } => ErrorKind::Transport,
        }
    }
}
