use serde::{Deserialize, Serialize};

use cvssa::selection::{PipelineResult, SelectionConfig, SelectionOutcome};
use cvssa::TargetQuery;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryEcho {
    #[serde(flatten)]
    pub query: TargetQuery,
    pub species_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcvSummary {
    pub estimate: f64,
    pub std_error: f64,
    pub r_squared: f64,
    pub n_cvs: usize,
    pub dropped: Vec<usize>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedRecord {
    pub moment: Vec<u32>,
    pub lambda: f64,
    pub gamma_v: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub baseline: f64,
    pub pilot: f64,
    pub covariance: f64,
    pub estimation: f64,
    pub wall: f64,
}

/// One estimate as printed by `cvssa estimate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub model: String,
    pub query: QueryEcho,
    pub seed: u64,
    pub config: SelectionConfig,
    /// Crude estimate from the separate baseline batch, or from the
    /// estimation batch when no baseline was run.
    pub crude: EstimateWithError,
    pub lcv: LcvSummary,
    pub selected: Vec<SelectedRecord>,
    /// `variance_crude / variance_lcv` of the estimation batch, capped.
    pub variance_reduction: f64,
    /// Per-trajectory time with accumulators over time without.
    pub slowdown: Option<f64>,
    pub efficiency: Option<f64>,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionOutcome>,
}

impl ResultRecord {
    pub fn new(
        model: String,
        query: QueryEcho,
        seed: u64,
        config: SelectionConfig,
        result: PipelineResult,
        wall: f64,
        with_audit: bool,
    ) -> Self {
        let est = &result.estimate;
        let crude = match &result.baseline {
            Some(b) => EstimateWithError { estimate: b.point, std_error: b.std_error_crude() },
            None => EstimateWithError { estimate: result.mean_v, std_error: est.std_error_crude() },
        };
        let slowdown = (result.costs.baseline_per_trajectory > 0.0)
            .then(|| result.costs.estimation_per_trajectory / result.costs.baseline_per_trajectory);
        ResultRecord {
            schema_version: SCHEMA_VERSION,
            model,
            query,
            seed,
            config,
            crude,
            lcv: LcvSummary {
                estimate: est.point,
                std_error: est.std_error(),
                r_squared: est.r_squared,
                n_cvs: est.d,
                dropped: est.dropped.clone(),
                beta: est.beta.clone(),
            },
            selected: result
                .selection
                .selected
                .iter()
                .map(|s| SelectedRecord {
                    moment: s.id.moment.0.clone(),
                    lambda: s.id.lambda,
                    gamma_v: s.gamma_v,
                    score: s.score,
                })
                .collect(),
            variance_reduction: est.reduction_factor(),
            slowdown,
            efficiency: result.efficiency.as_ref().map(|e| e.efficiency),
            timings: Timings {
                baseline: result.costs.baseline,
                pilot: result.costs.pilot,
                covariance: result.costs.covariance,
                estimation: result.costs.estimation,
                wall,
            },
            selection: with_audit.then_some(result.selection),
        }
    }
}
