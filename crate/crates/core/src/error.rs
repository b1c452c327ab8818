use std::path::PathBuf;

use thiserror::Error;

use crate::engine::RunState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pose-mismatch: {0}")]
    PoseMismatch(String),

    #[error("decode: failed to read image {file}: {reason}")]
    Decode { file: PathBuf, reason: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate-alpha: alpha({t}) = {alpha:e} is below 1e-8")]
    DegenerateAlpha { t: f64, alpha: f64 },

    #[error("channel-mismatch: student latents have {student} channels, teacher expects {teacher}")]
    ChannelMismatch { student: usize, teacher: usize },

    #[error("shape-mismatch: {0}")]
    ShapeMismatch(String),

    #[error("timestep-mismatch: expected latents at {expected}, got {got}")]
    TimestepMismatch { expected: f64, got: f64 },

    #[error("keyframe index {index} out of range for {n} frames")]
    KeyframeOutOfRange { index: usize, n: usize },

    #[error("insufficient-views: need at least 2 views, got {0}")]
    InsufficientViews(usize),

    #[error("non-finite gradient at iteration {iteration} (tau = {tau})")]
    NonFiniteGradient {
        iteration: usize,
        tau: f64,
        snapshot: Box<RunState>,
    },

    #[error("unknown {kind} backend '{name}' (available: {available})")]
    UnknownBackend {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("invalid survey data: {0}")]
    Survey(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output directory is locked by another run ({0} exists)")]
    Locked(PathBuf),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag used in structured CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::PoseMismatch(_) => "pose-mismatch",
            Error::Decode { .. } => "decode",
            Error::InvalidScene(_) => "invalid-scene",
            Error::InvalidConfig(_) => "invalid-config",
            Error::DegenerateAlpha { .. } => "degenerate-alpha",
            Error::ChannelMismatch { .. } => "channel-mismatch",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::TimestepMismatch { .. } => "timestep-mismatch",
            Error::KeyframeOutOfRange { .. } => "index",
            Error::InsufficientViews(_) => "insufficient-views",
            Error::NonFiniteGradient { .. } => "non-finite-gradient",
            Error::UnknownBackend { .. } => "unknown-backend",
            Error::Backend(_) => "backend",
            Error::Survey(_) => "survey",
            Error::Context { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Locked(_) => "locked",
            Error::Json(_) => "json",
        }
    }
}
