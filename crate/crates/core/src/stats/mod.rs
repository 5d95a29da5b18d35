//! Online joint statistics and the linear control variate estimator.

mod lcv;
mod running;

pub use lcv::{
    efficiency, estimate_beta, improvement_ratio, lcv_estimate, BetaFit, EfficiencyReport, LcvEstimate,
    IMPROVEMENT_CAP, PIVOT_TOL, REDUCTION_CAP, RHO_CAP,
};
pub use running::RunningStats;
