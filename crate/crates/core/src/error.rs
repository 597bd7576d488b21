use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operator is singular (condition estimate {condition:e})")]
    SingularOperator { condition: f64 },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("symbolic window cannot produce coordinate {index}")]
    WindowExhausted { index: i64 },

    #[error("no return found in the window ({lo}, {hi})")]
    NotFound { lo: f64, hi: f64 },

    #[error("word is not closable: transition {from} -> {to} is forbidden")]
    ForbiddenWrap { from: u8, to: u8 },

    #[error("closing solve is ill-conditioned: {0}")]
    IllConditionedClosing(String),

    #[error("closing calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("generator table has no entry for word {0:?}")]
    MissingWord(Vec<u8>),

    #[error("uniform bound violated: {0}")]
    BoundsViolated(String),

    #[error("sampler is incompatible with the base system: {0}")]
    IncompatibleSampler(String),

    #[error("invalid base system: {0}")]
    InvalidBase(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: f64, budget: f64 },

    #[error("closeness profile violated at i = {index}: {distance:e} > {bound:e}")]
    ProfileViolated {
        index: usize,
        distance: f64,
        bound: f64,
    },

    #[error("Lyapunov norm series did not converge at truncation {truncation}")]
    NonConvergent { truncation: usize },
}
