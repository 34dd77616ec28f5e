use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing view file for (row {row}, col {col}): {path}")]
    MissingView { row: usize, col: usize, path: PathBuf },

    #[error("view {path} is {found}, expected {expected}")]
    InconsistentView {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("invalid light-field grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed {format} file {path}: {reason}")]
    Format {
        format: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("reference spacing {spacing} leaves fewer than four reference views in a {vx}x{vy} grid")]
    SpacingTooLarge { spacing: usize, vx: usize, vy: usize },

    #[error("a {vx}x{vy} grid cannot supply four distinct cross-hair partners for view ({i}, {j})")]
    GridTooSmall { i: usize, j: usize, vx: usize, vy: usize },

    #[error("depth conversion bounds are degenerate: {0}")]
    DegenerateBounds(String),

    #[error("map has no valid pixels")]
    NoValidPixels,

    #[error("depth histogram has {distinct} distinct occupied bins, {classes} classes requested")]
    TooFewDistinct { distinct: usize, classes: usize },

    #[error("panel {panel}: {reason}")]
    Calibration { panel: usize, reason: String },

    #[error("affine scale must be positive, got ({sx}, {sy})")]
    NonPositiveScale { sx: f64, sy: f64 },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("output directory {0} is locked by another run (remove the lock file if stale)")]
    Locked(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
