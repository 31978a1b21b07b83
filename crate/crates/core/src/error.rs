use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("operator is not positive definite: lambda_11 = {lambda11}")]
    NonPositiveOperator { lambda11: f64 },

    #[error("Q2 noise parameter mu0 = {mu0} must exceed -2 pi^2")]
    BadNoiseParam { mu0: f64 },

    #[error("thinned {axis} node {index} at {coord} does not coincide with a parent node")]
    MisalignedThinning {
        axis: &'static str,
        index: usize,
        coord: f64,
    },

    #[error("degenerate view: {0}")]
    DegenerateView(String),

    #[error("coarsening factor {p} does not divide cells {cells} / steps {steps} as required")]
    IndivisibleCoarsening { p: usize, cells: usize, steps: usize },

    #[error("folded synthesis requires uniform grids on both axes")]
    FoldedRequiresUniformGrid,

    #[error("operation requires the full uniform observation grid")]
    NonUniformGrid,

    #[error("quadrature tolerance {requested:e} not met (achieved bound {achieved:e})")]
    ToleranceNotMet { requested: f64, achieved: f64 },

    #[error("degenerate contrast design: sum of squared limit weights is zero")]
    DegenerateDesign,

    #[error("realized quadratic variation of mode ({l1},{l2}) is not positive: {value}")]
    NonPositiveQV { l1: usize, l2: usize, value: f64 },

    #[error("mode (1,2) variation is not below mode (1,1) after rescaling; sigma^2 undefined")]
    InvertedModeOrder,

    #[error("too few usable rows for a summary: {0}")]
    TooFewRows(usize),

    #[error("bad magic bytes in field file")]
    BadMagic,

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("truncated field file: expected {expected} payload bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
