use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no occluder placement reached occlusion range [{lo}, {hi}] after {attempts} attempts (seed {seed})")]
    InfeasibleOcclusion { lo: f64, hi: f64, attempts: usize, seed: u64 },

    #[error("occluder lies entirely outside the frame")]
    OccluderOutsideFrame,

    #[error("silhouette pool is empty")]
    EmptyPool,

    #[error("reference mask has an empty bounding box")]
    EmptyReference,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("region mask selects no pixels")]
    EmptyRegion,

    #[error("sample {sample_id}: {reason}")]
    Sample { sample_id: String, reason: String },

    #[error("corrupt {what}: {reason}")]
    Corrupt { what: String, reason: String },

    #[error("checksum mismatch for {path}")]
    Checksum { path: PathBuf },

    #[error("checkpoint format version {found} is incompatible with supported version {supported}")]
    Version { found: u32, supported: u32 },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("visible segmenter produced an empty mask at iteration {iteration}")]
    EmptyVisibleMask { iteration: usize },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },

    #[error("label {label} outside classifier classes 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("png error on {path}: {reason}")]
    Png { path: PathBuf, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
