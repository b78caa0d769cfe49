use thiserror::Error;

/// Errors raised by the analysis modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive price {value} for asset `{asset}` at row {row}, column {column}")]
    NonPositivePrice {
        asset: String,
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("ragged panel: row {row} has length {len}, expected {expected}")]
    Ragged {
        row: usize,
        len: usize,
        expected: usize,
    },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("series `{asset}` has zero variance")]
    ZeroVariance { asset: String },

    #[error("panel must be standardized before building a correlation matrix")]
    NotStandardized,

    #[error("coarsening factor {factor} does not divide bars_per_day = {bars_per_day}")]
    CoarsenFactor { factor: usize, bars_per_day: usize },

    #[error("matrix is not symmetric (max |C - C^T| = {0:e})")]
    NotSymmetric(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("detrending fit is under-determined: segment length {scale} with polynomial order {order}")]
    UnderdeterminedFit { scale: usize, order: usize },

    #[error(
        "zero segment variance with q = {q} makes the fluctuation function diverge; \
         raise the minimum scale"
    )]
    DivergentMoment { q: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("no assets remain after dropping degenerate series")]
    NoAssets,
}

pub type Result<T> = std::result::Result<T, Error>;
