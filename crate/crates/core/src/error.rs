use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },

    #[error("image array is not a permutation: {0}")]
    NotAPermutation(String),

    #[error("function is not a bijection of Z/{0}Z")]
    NotBijective(usize),

    #[error("base mismatch: BS(1,{left}) vs BS(1,{right})")]
    BaseMismatch { left: u64, right: u64 },

    #[error("{a} and {b} are not coprime")]
    NotCoprime { a: u64, b: u64 },

    #[error("{what}: size {needed} exceeds budget {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: String,
        budget: u64,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("key {0} has no image in this approximation")]
    MissingKey(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0} is not a prime power")]
    NotPrimePower(u64),

    #[error("{0} is not prime")]
    NotPrime(u64),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("degree n = {n} is below the admissibility threshold N = {threshold}")]
    BelowThreshold { n: usize, threshold: usize },

    #[error("approximation too coarse: {bad} of {n} points fail the multiplicativity/freeness test (allowed {allowed})")]
    TooCoarse { bad: usize, n: usize, allowed: String },

    #[error("tiling of approximation {side} fails verification: {detail}")]
    TilingRejected { side: usize, detail: String },

    #[error("insufficient support: |Λ| = {support}, required at least {required}")]
    InsufficientSupport { support: usize, required: String },

    #[error("malformed input: {0}")]
    Malformed(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}
