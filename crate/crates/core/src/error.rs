use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a continuous distribution, got {0}")]
    NotContinuous(&'static str),

    #[error("root not bracketed on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    RootNotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("working density vanishes at x = {0}")]
    DensityZero(f64),

    #[error("no predictive distribution for unit `{0}`")]
    MissingDistribution(String),

    #[error("empty input")]
    EmptyInput,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("within-chain variance is zero")]
    ZeroVariance,

    #[error("{0}")]
    Config(String),

    #[error("sampler failure: {0}")]
    Sampler(String),
}

pub type Result<T> = std::result::Result<T, Error>;
