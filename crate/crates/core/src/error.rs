use thiserror::Error;

/// Errors raised by the calculus, norm, operator and scenario layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("section does not vanish on the outer {layers} grid layers (edge/peak ratio {ratio:.3e})")]
    SupportViolation { layers: usize, ratio: f64 },

    #[error("support margin of {margin} layers cannot host {needed} stencil layers")]
    MarginTooSmall { margin: usize, needed: usize },

    #[error("metric is singular or indefinite at {at:?} (min/max eigenvalue {ratio:.3e})")]
    SingularMetric { at: Vec<f64>, ratio: f64 },

    #[error("metric is not symmetric at {at:?}")]
    AsymmetricMetric { at: Vec<f64> },

    #[error("weight is not positive at {at:?}")]
    NonpositiveWeight { at: Vec<f64> },

    #[error("weight is not admissible: sup |d rho|_g = {sup:.3e} exceeds {bound:.3e}")]
    NonadmissibleWeight { sup: f64, bound: f64 },

    #[error("chart mismatch: {0}")]
    ChartMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("exponents violate 1/p + 1/q = 1/r: p={p}, q={q}, r={r}")]
    ExponentMismatch { p: f64, q: f64, r: f64 },

    #[error("covering has no sets")]
    EmptyCovering,

    #[error("covering misses grid points where the section is supported")]
    IncompleteCovering,

    #[error("embedding is degenerate at {at:?} (smallest singular value {sigma:.3e})")]
    DegenerateEmbedding { at: Vec<f64>, sigma: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown name: {0}")]
    Resolution(String),

    #[error("in check `{check}`: {source}")]
    Check {
        check: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
