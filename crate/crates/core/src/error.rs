use std::path::PathBuf;

/// Every failure the library reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate rotation: both 6D columns vanish")]
    DegenerateRotation,
    #[error("matrix is not a rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("skeleton has no mirror pairs")]
    MissingMirrorMap,
    #[error("cannot resample from {from} fps up to {to} fps")]
    UpsamplingUnsupported { from: f64, to: f64 },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("sequence too short: need {needed} frames, have {actual}")]
    TooShort { needed: usize, actual: usize },
    #[error("bad magic in {0}")]
    BadMagic(PathBuf),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u64),
    #[error("input must be z-normalized")]
    NotNormalized,
    #[error("input must not be normalized")]
    Normalized,
    #[error("regularizer does not match codec variant {0}")]
    VariantMismatch(String),
    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },
    #[error("non-finite loss term {0}")]
    NonFiniteLoss(&'static str),
    #[error("this model is supervised and needs a style label")]
    LabelRequired,
    #[error("this model is unsupervised and takes no style label")]
    LabelForbidden,
    #[error("style label {label} out of range (model has {n_labels})")]
    LabelOutOfRange { label: usize, n_labels: usize },
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("label-based stylization needs a supervised model")]
    UnsupervisedModel,
    #[error("prior-based stylization needs an unsupervised model")]
    SupervisedModel,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("missing codec: {0}")]
    MissingCodec(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("degenerate features: {0}")]
    DegenerateFeatures(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} items, got {actual}")]
    TooFew { needed: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Tape(#[from] motionstyle_tape::TapeError),
}

/// Coarse grouping used by the command line for exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Data,
    ModeMismatch,
    Diverged,
    Usage,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            LabelRequired | LabelForbidden | ModeMismatch(_) | UnsupervisedModel
            | SupervisedModel | VariantMismatch(_) => ErrorCategory::ModeMismatch,
            Diverged { .. } | NonFiniteLoss(_) => ErrorCategory::Diverged,
            Config(_) | OutOfRange(_) | LabelOutOfRange { .. } => ErrorCategory::Usage,
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
