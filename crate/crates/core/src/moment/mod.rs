//! Polynomial algebra, moment drift, and the exponentially weighted moment
//! constraints that define each control variate.

mod constraint;
mod poly;

pub use constraint::{
    accumulator_keys, constraint_expansion, moment_drift, normalize_lambda, weight_integral, AccumulatorKey,
    ConstraintExpansion, ControlVariateId, LAMBDA_ZERO_TOL,
};
pub use poly::{MultiIndex, Polynomial};
