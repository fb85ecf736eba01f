// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate row {row}: every entry is masked")]
    DegenerateRow { row: usize },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("decode error: token id {0} is not a byte or a known special token")]
    Decode(u32),

    #[error("format error at offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid generation parameters: {0}")]
    GenParams(String),

    #[error("hook `{label}` returned shape {got:?}, expected {expected:?}")]
    HookShape {
        label: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("attention row {row} of layer {layer} sums to {sum}")]
    AttentionRow { layer: usize, row: usize, sum: f64 },

    #[error("composition error: {0}")]
    Composition(String),

    #[error("pipeline state error: {0}")]
    PipelineState(String),

    #[error("override error: {0}")]
    Override(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("control `{control}` failed: {source}")]
    Control {
        control: String,
        #[source]
        source: Box<Error>,
    },

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("class balance error: {0}")]
    ClassBalance(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("span resolution error: no occurrence of {0} in the prompt")]
    SpanResolution(String),

    #[error("structural error on tensor `{tensor}`: {message}")]
    Structural { tensor: String, message: String },

    #[error("bias error: token id {0} is outside the vocabulary")]
    Bias(u32),

    #[error("pool exhausted: requested {requested} examples from a pool of {available}")]
    PoolExhausted { requested: usize, available: usize },

    #[error("not registered: {0}")]
    Registry(String),

    #[error("malformed kwargs for `{checker}`: {message}")]
    Kwargs { checker: String, message: String },

    #[error("join error: generation references unknown datapoint `{0}`")]
    Join(String),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_control(self, control: &str) -> Self {
        Self::Control {
            control: control.to_owned(),
            source: Box::new(self),
        }
    }
}
