use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid float format: {0}")]
    InvalidFormat(String),

    #[error("unknown format name `{0}` (expected q52, fp16, fp32 or fp64)")]
    UnknownFormat(String),

    #[error("gamma_r undefined: r*u = {ru} >= 1 (r = {r}, u = {u}); format too coarse for this dimension")]
    GammaUndefined { r: usize, u: f64, ru: f64 },

    #[error("zero vector passed where a nonzero vector is required")]
    ZeroVector,

    #[error("label slices have mismatched lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty label slices")]
    EmptyLabels,

    #[error("feature {feature} has zero variance; z-score normalization undefined")]
    ZeroVariance { feature: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-numeric cell at row {row}, column {col}: {content:?}")]
    NonNumericCell {
        row: usize,
        col: usize,
        content: String,
    },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: expected a 3-column RGB pixel table, found {cols} columns")]
    NotAPixelTable { path: PathBuf, cols: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset contains a non-finite value at point {point}, feature {feature}")]
    NonFiniteData { point: usize, feature: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
