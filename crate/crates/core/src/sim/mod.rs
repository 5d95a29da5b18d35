//! Exact stochastic simulation with running control variate integrals.

mod batch;
mod rng;
mod ssa;

pub use batch::{run_batch, BatchOptions, BatchResult, Sample, BLOCK_SIZE};
pub use rng::{derive_seed, trajectory_rng, SimRng};
pub use ssa::{
    path_integral, simulate, simulate_with_accumulators, z_realization, AccumulatorMap, AccumulatorPlan, SimConfig,
    Simulator, DEFAULT_MAX_EVENTS,
};
