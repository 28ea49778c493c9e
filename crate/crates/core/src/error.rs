use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LemError {
    #[error("raster must be at least 3x3 and addressable, got {width}x{height}")]
    Dimensions { width: usize, height: usize },

    #[error("raster data has {actual} values, expected {expected}")]
    DataLength { expected: usize, actual: usize },

    #[error("unsupported connectivity {0} (use 4 or 8)")]
    Connectivity(u32),

    #[error("cell spacing must be positive and finite, got dx={dx} dy={dy}")]
    CellSpacing { dx: f64, dy: f64 },

    #[error("flow graph contains a cycle: {unresolved} cells never reached a sink")]
    Cycle { unresolved: usize },

    #[error("Newton iteration did not converge at cell {cell} after {iterations} iterations")]
    NonConvergence { cell: usize, iterations: u32 },

    #[error("invalid parameter {name}: {reason}")]
    Param { name: &'static str, reason: String },

    #[error("elevation at cell {cell} is not finite")]
    NonFinite { cell: usize },

    #[error("cell {cell} was eroded before its receiver")]
    OrderViolation { cell: usize },

    #[error("strategy {strategy} does not support {what}")]
    Unsupported { strategy: String, what: String },

    #[error(transparent)]
    RasterIo(#[from] RasterIoError),

    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum RasterIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed raster header: {0}")]
    Header(String),

    #[error("raster payload truncated: expected {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("raster dimensions {width}x{height} overflow addressable size")]
    DimensionOverflow { width: u64, height: u64 },

    #[error("raster payload has {extra} trailing bytes")]
    TrailingData { extra: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },

    #[error("key `{key}`: {reason}")]
    Range { key: String, reason: String },

    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
}
