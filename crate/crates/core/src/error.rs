use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DistError>;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("class coverage: labeled subset of {labeled} clips cannot cover all {num_classes} classes")]
    ClassCoverage { labeled: usize, num_classes: usize },

    #[error("clip `{0}` has no frames")]
    EmptyClip(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },

    #[error("class count mismatch: model has {model} classes, data has {data}")]
    ClassCountMismatch { model: usize, data: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("unknown clip id `{0}`")]
    MissingClip(String),

    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("non-finite loss at epoch {epoch} (batch {batch})")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("epoch {epoch} out of range for a {epochs}-epoch schedule")]
    EpochOutOfRange { epoch: usize, epochs: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("sequence of {duration_s:.3}s is shorter than one {window_s:.3}s window")]
    SequenceTooShort { duration_s: f64, window_s: f64 },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{0} artifacts missing")]
    MissingArtifacts(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<DistError>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DistError {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        DistError::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DistError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        DistError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// Short stable code for machine-readable failure lines.
    pub fn code(&self) -> &'static str {
        match self {
            DistError::InvalidParameter { .. } => "E_PARAM",
            DistError::ClassCoverage { .. } => "E_CLASS_COVERAGE",
            DistError::EmptyClip(_) => "E_EMPTY_CLIP",
            DistError::ShapeMismatch { .. } => "E_SHAPE",
            DistError::ClassCountMismatch { .. } => "E_CLASS_COUNT",
            DistError::LabelOutOfRange { .. } => "E_LABEL",
            DistError::MissingClip(_) => "E_MISSING_CLIP",
            DistError::InvalidProbabilities(_) => "E_PROBS",
            DistError::NonFiniteLoss { .. } => "E_NONFINITE_LOSS",
            DistError::EpochOutOfRange { .. } => "E_EPOCH",
            DistError::EmptyTestSet => "E_EMPTY_TEST",
            DistError::SequenceTooShort { .. } => "E_SEQUENCE",
            DistError::Config { .. } => "E_CONFIG",
            DistError::MissingArtifacts(_) => "E_ARTIFACTS",
            DistError::Format { .. } => "E_FORMAT",
            DistError::Stage { source, .. } => source.code(),
            DistError::Io { .. } => "E_IO",
        }
    }
}
