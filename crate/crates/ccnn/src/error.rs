use thiserror::Error;

/// Errors surfaced by the public API.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left_rows}x{left_cols} and {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("{op}: invalid dimensions {rows}x{cols}")]
    InvalidDimensions {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("data length {len} does not match {rows}x{cols}")]
    BadDataLength { rows: usize, cols: usize, len: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("rank {rank} out of range for {rows}x{cols} matrix")]
    RankOutOfRange { rank: usize, rows: usize, cols: usize },

    #[error("SVD did not converge within {sweeps} sweeps (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    SvdNotConverged {
        sweeps: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("layer {layer}: {source}")]
    AtLayer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("epoch {epoch}, batch {batch}: {source}")]
    AtBatch {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("label {label} out of range for {classes} classes (sample {sample})")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        sample: usize,
    },

    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    IdxBadMagic {
        path: String,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    IdxTruncated {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("image count {images} does not match label count {labels}")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("feature scaling undefined: maximum per-feature variance is zero")]
    ZeroVariance,

    #[error("requested split sizes sum to {requested}, dataset has {available} samples")]
    SplitTooLarge { requested: usize, available: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a layer index to an error propagating out of per-layer work.
    pub fn at_layer(self, layer: usize) -> Error {
        Error::AtLayer {
            layer,
            source: Box::new(self),
        }
    }

    /// Attach epoch/batch coordinates to an error inside the training loop.
    pub fn at_batch(self, epoch: usize, batch: usize) -> Error {
        Error::AtBatch {
            epoch,
            batch,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
