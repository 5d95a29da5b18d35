use std::fmt;

use thiserror::Error;

/// Model construction failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate species `{0}`")]
    DuplicateSpecies(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("`{0}` is declared both as a species and as a parameter")]
    NameClash(String),
    #[error("initial state has {got} entries but the model has {expected} species")]
    InitialStateLength { expected: usize, got: usize },
    #[error("initial count of `{species}` is negative ({count})")]
    NegativeInitialCount { species: String, count: i64 },
    #[error("reaction {reaction} has stoichiometry vectors of the wrong length")]
    StoichiometryLength { reaction: usize },
    #[error("reaction {reaction} has neither reactants nor products")]
    EmptyReaction { reaction: usize },
    #[error("reaction {reaction}: mass-action constant must be positive and finite, got {value}")]
    NonPositiveRate { reaction: usize, value: f64 },
    #[error("reaction {reaction}: mass-action constant must not depend on species counts")]
    SpeciesInRateConstant { reaction: usize },
    #[error("reaction {reaction}: {source}")]
    Rate { reaction: usize, source: EvalError },
}

/// Evaluation errors shared by the stack machine and the tree-walk reference.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("stack imbalance in rate program")]
    StackImbalance,
    #[error("unresolved species reference #{0}")]
    UnknownSpecies(usize),
    #[error("unresolved parameter reference #{0}")]
    UnknownParameter(usize),
}

/// A rate law that cannot be written as a polynomial in the species counts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rate law is not polynomial in the species counts: {reason}")]
pub struct PolynomialityError {
    pub reason: String,
}

/// Position-tagged model file error.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event cap of {0} exceeded before the horizon")]
    EventCapExceeded(u64),
    #[error("reaction {reaction} produced an invalid propensity {value}")]
    InvalidPropensity { reaction: usize, value: f64 },
    #[error("reaction {reaction} drove species {species} negative")]
    NegativeState { reaction: usize, species: usize },
    #[error("rate evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("missing accumulator for monomial {monomial:?} at lambda {lambda}")]
    MissingAccumulator { monomial: Vec<u32>, lambda: f64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("species index {0} out of range")]
    SpeciesOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("expected a control variate vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} samples, have {have}")]
    TooFewSamples { needed: u64, have: u64 },
    #[error("non-positive input to efficiency: {0}")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("lost probability mass {lost:e} exceeds tolerance {tolerance:e}; enlarge the truncation box")]
    WindowTooSmall { lost: f64, tolerance: f64 },
    #[error("truncated state space exceeds {limit} states")]
    TooManyStates { limit: usize },
    #[error("model out of FSP scope: {0}")]
    OutOfScope(String),
    #[error("truncation box has {got} bounds, model has {expected} species")]
    BoxLength { expected: usize, got: usize },
    #[error("initial state lies outside the truncation box")]
    InitialOutsideBox,
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Polynomial(#[from] PolynomialityError),
}

/// Umbrella error for the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Polynomial(#[from] PolynomialityError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
