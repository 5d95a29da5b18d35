//! Reference answers independent of simulation: closed forms and a
//! truncated master equation solver.

mod closed_form;
mod fsp;

pub use closed_form::bd_mean_closed_form;
pub use fsp::{fsp_transient, FspSolution, FspSystem, TruncationBox, MAX_SPECIES, MAX_STATES, STEP_TOLERANCE};
