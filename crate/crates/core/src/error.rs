use thiserror::Error;

/// Errors raised by the library. Each variant names the violated invariant.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: {atoms} atoms but {probs} probabilities")]
    LengthMismatch { atoms: usize, probs: usize },

    #[error("negative probability {value} at position {index}")]
    NegativeProbability { index: usize, value: f64 },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("probabilities sum to {sum}, not 1")]
    ProbabilitySum { sum: f64 },

    #[error("empty distribution")]
    Empty,

    #[error("nonzero mean {mean}; center the input first")]
    NonzeroMean { mean: f64 },

    #[error("zero variance")]
    ZeroVariance,

    #[error("nonzero third moment {value}")]
    NonzeroThirdMoment { value: f64 },

    #[error("variance {value} is not 1")]
    NotStandardized { value: f64 },

    #[error("pair law is not exchangeable (asymmetry {residual})")]
    NotExchangeable { residual: f64 },

    #[error("degenerate pair law: E(W - W')^2 = 0")]
    DegeneratePair,

    #[error("regression E(W'|W) is not linear in W (residual {residual})")]
    NonlinearRegression { residual: f64 },

    #[error("all v_i^2 vanish; coupling undefined")]
    AllVZero,

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("population needs at least {min} values, got {got}")]
    PopulationTooSmall { min: usize, got: usize },

    #[error("population power sum <{k}> = {value}, expected {expected}")]
    MomentCondition { k: u32, value: f64, expected: f64 },

    #[error("population values must be distinct")]
    NotDistinct,

    #[error("sample size n = {n} out of range for N = {population}")]
    SampleSize { n: usize, population: usize },

    #[error("odd population size {0}; symmetrization needs N even")]
    OddPopulation(usize),

    #[error("q mass {mass} deviates from 1")]
    QMass { mass: f64 },

    #[error("enumeration needs {needed} configurations, cap is {cap}")]
    EnumerationCap { needed: f64, cap: u64 },

    #[error("sampling fraction {0} outside (0, 1)")]
    Fraction(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("test function norm check failed: |h^({order})| reaches {observed} > declared {declared}")]
    NormCheck { order: usize, observed: f64, declared: f64 },

    #[error("quadrature did not converge (estimated error {estimate})")]
    Quadrature { estimate: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
