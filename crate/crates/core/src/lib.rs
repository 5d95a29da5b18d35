//! Variance-reduced Monte Carlo estimation for stochastic reaction networks.
//!
//! Moment constraints of the chemical master equation, weighted by
//! `e^(lambda t)`, give zero-mean random variables that are accumulated
//! along each SSA trajectory and used as linear control variates.

// NaN-rejecting `!(x > 0.0)` checks and index loops over packed triangles
// are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod builtin;
pub mod dsl;
pub mod error;
pub mod moment;
pub mod oracle;
pub mod rate;
pub mod selection;
pub mod sim;
pub mod srn;
pub mod stats;

pub use dsl::{parse_model, to_srn};
pub use error::{Error, Result};
pub use moment::{ControlVariateId, MultiIndex, Polynomial};
pub use srn::{Model, Reaction, TargetQuery, Trajectory};
