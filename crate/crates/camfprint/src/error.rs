use std::path::PathBuf;

/// Errors produced by any stage of the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no images found under {0}")]
    NoImagesFound(PathBuf),

    #[error("insufficient devices: {found} remain after filtering (need at least {need})")]
    InsufficientDevices { found: usize, need: usize },

    #[error("device {device} has too few images to split ({count})")]
    DeviceTooSmall { device: String, count: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("input size {height}x{width} collapses to zero spatial extent at block {block}")]
    InputTooSmall {
        height: usize,
        width: usize,
        block: usize,
    },

    #[error("non-finite loss in phase {phase} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        phase: u8,
        epoch: usize,
        batch: usize,
    },

    #[error("signature has {0} values, expected 1024")]
    BadSignatureLength(usize),

    #[error("extractor version mismatch: {a} vs {b}")]
    VersionMismatch { a: String, b: String },

    #[error("no same-device pairs can be formed")]
    NoSameDevicePairs,

    #[error("F1 undefined: validation pairs contain only one label")]
    F1Undefined,

    #[error("store conflict: {path} already stored with different values under the same extractor version")]
    StoreConflict { path: String },

    #[error("corrupt store file {path}: {reason}")]
    StoreCorrupt { path: PathBuf, reason: String },

    #[error("corrupt checkpoint {path}: {reason}")]
    CheckpointCorrupt { path: PathBuf, reason: String },

    #[error("device {0} has no test signatures in the store")]
    NoTestSignatures(String),

    #[error("missing artifact {path}; run `{hint}` first")]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("artifact {0} already exists; pass --force to recompute")]
    WouldRecompute(PathBuf),

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
