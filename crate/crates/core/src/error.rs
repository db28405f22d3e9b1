use thiserror::Error;

/// Errors raised by the laboratory's constructors and experiments.
///
/// Every variant corresponds to a violated precondition; numerical
/// experiments that merely fail to converge report that through flags on
/// their result types instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point index {index} out of range for a grid of {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("sample window too small: endpoint magnitude {endpoint:e} exceeds {tolerance:e}")]
    WindowTooSmall { endpoint: f64, tolerance: f64 },

    #[error("multiplier `{label}` is undefined at lambda = {lambda}")]
    UndefinedMultiplier { label: String, lambda: f64 },

    #[error("multiplier `{0}` supplies no derivatives and finite differences are disabled")]
    MissingDerivatives(String),

    #[error("Re z = {0} is negative; the semigroup is only defined on the closed right half-plane")]
    NegativeRealPart(f64),

    #[error("complex time must be nonzero")]
    ZeroTime,

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("dense kernel matrix of {points} points exceeds the cap of {cap} points")]
    DenseCapExceeded { points: usize, cap: usize },

    #[error("branch point: z^2 + rho^2 vanishes at z = {re} + {im}i, rho = {rho}")]
    BranchPoint { re: f64, im: f64, rho: f64 },

    #[error("|theta| = {theta} exceeds the cone cap {cap}")]
    ThetaBeyondCap { theta: f64, cap: f64 },

    #[error("every triple in the sample is degenerate ({0} skipped)")]
    AllTriplesDegenerate(usize),

    #[error("b = {b} must exceed d/2 = {half_d} for the integral to converge")]
    DivergentExponent { b: f64, half_d: f64 },

    #[error("j range [{lo}, {hi}] is too narrow: boundary term ratio {ratio:e} exceeds {tolerance:e}")]
    InsufficientJRange { lo: i32, hi: i32, ratio: f64, tolerance: f64 },

    #[error("Lebesgue exponent p = {0} must lie in (1, inf)")]
    ExponentOutOfRange(f64),

    #[error("exact Rademacher enumeration supports at most {max} terms, got {got}")]
    TooManyTerms { got: usize, max: usize },

    #[error("vector has mean {0:e}; mean-zero input required")]
    NonzeroMean(f64),

    #[error("beta = {beta} must exceed alpha + 1/2 = {bound}")]
    NonIntegrableWeight { beta: f64, bound: f64 },

    #[error("multiplier `{0}` has infinite Hormander norm")]
    InfiniteNorm(String),

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
