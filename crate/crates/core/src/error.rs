use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dead symbol at index j={j}: {kind} {symbol} is all zero")]
    DeadSymbol { j: i64, kind: &'static str, symbol: usize },
    #[error("extension rule incompatible with the window: {0}")]
    ExtensionMismatch(String),
    #[error("no mixing window M <= {m_cap}")]
    NotMixing { m_cap: usize },
    #[error("words have different base index or length")]
    BaseMismatch,
    #[error("inadmissible word: {0}")]
    Inadmissible(String),
    #[error("index {j} outside the solved window [{lo}, {hi}]")]
    IndexOutOfWindow { j: i64, lo: i64, hi: i64 },
    #[error("depth {depth} exceeds the table cap ({size} cells)")]
    DepthOverflow { depth: usize, size: u128 },
    #[error("no convergence: {what} after {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },
    #[error("bad density: {0}")]
    BadDensity(String),
    #[error("observable is not integer valued at index {j}")]
    NotIntegerValued { j: i64 },
    #[error("value range {range} exceeds the cap {cap}")]
    RangeOverflow { range: u64, cap: u64 },
    #[error("grid spacing {spacing} exceeds {max}")]
    GridTooCoarse { spacing: f64, max: f64 },
    #[error("degenerate variance: sigma_n = {sigma}")]
    DegenerateVariance { sigma: f64 },
    #[error("lattice span {span} differs from 1; rescale the observable first")]
    SpanMismatch { span: f64 },
    #[error("invalid decomposition: {0}")]
    DecompositionInvalid(String),
    #[error("matrix at index {j} is not stochastic (row {row} sums to {sum})")]
    NotStochastic { j: i64, row: usize, sum: f64 },
    #[error("chain is not elliptic: {0}")]
    NotElliptic(String),
    #[error("matrix {index} has a non-positive entry")]
    NotPositive { index: usize },
    #[error("branch {branch} at index {j} has slope {slope} (not expanding)")]
    NotExpanding { j: i64, branch: usize, slope: f64 },
    #[error("branch {branch} at index {j}: image is not a union of partition cells")]
    NotMarkov { j: i64, branch: usize },
    #[error("reference past incompatible at index {j}: {detail}")]
    IncompatibleReferencePast { j: i64, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
