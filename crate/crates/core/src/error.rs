use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate lattice law: at least two atoms with positive probability are required")]
    Degenerate,

    #[error("negative probability {prob} at index {index}")]
    NegativeProbability { index: i64, prob: f64 },

    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),

    #[error("lattice span must be finite and positive, got {0}")]
    InvalidSpan(f64),

    #[error("oracle infeasible: {atoms} atoms exceed the budget of {budget}")]
    OracleInfeasible { atoms: u128, budget: u64 },

    #[error("precision exhausted at partial quotient {depth}")]
    PrecisionExhausted { depth: usize },

    #[error("integer overflow while computing convergent {index}")]
    Overflow { index: usize },

    #[error("convergent {p}/{q} violates |p/q - rho| <= 1/q^2")]
    BoundViolated { p: i128, q: i128 },

    #[error("bound undefined for rational tau with denominator <= {m} (sin vanishes at l = {l})")]
    RationalTau { m: u64, l: u64 },

    #[error("operation requires {expected} populations, model has {found}")]
    PopulationCount { expected: usize, found: usize },

    #[error("zero plug-in variance in population {0}")]
    ZeroVariance(usize),

    #[error("too few rows: need {needed}, found {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("unknown irrational constant {0:?}")]
    UnknownConstant(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
