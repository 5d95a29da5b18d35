//! Repeated-estimation benchmarks comparing crude Monte Carlo with the
//! control variate pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{crude_estimate, run_pipeline, SelectionConfig};
use crate::sim::derive_seed;
use crate::srn::{Model, TargetQuery};
use crate::stats::{efficiency, REDUCTION_CAP};

/// Outcome of one pipeline repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub point: f64,
    pub variance_lcv: f64,
    /// `sigma_V^2 / n` of the pipeline's own estimation batch.
    pub variance_crude: f64,
    pub n_cvs: usize,
    pub cost_cv: f64,
}

/// One crude repetition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrudeSummary {
    pub point: f64,
    pub cost: f64,
}

/// Aggregate over `R` repetitions of each estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub repetitions: usize,
    pub crude_repetitions: usize,
    pub crude_mean: f64,
    /// Empirical variance of the crude estimates.
    pub crude_variance: f64,
    /// Mean `sigma_V^2 / n` over the pipeline batches; the exact variance
    /// of a crude estimate, estimated from `R n` trajectories.
    pub pooled_crude_variance: f64,
    pub lcv_mean: f64,
    pub lcv_variance: f64,
    /// Ratio of the empirical variances across repetitions.
    pub reduction: f64,
    /// `pooled_crude_variance / lcv_variance`.
    pub pooled_reduction: f64,
    /// Mean of the per-estimate `variance_crude / variance_lcv`.
    pub model_reduction: f64,
    pub mean_cvs: f64,
    /// Mean wall-clock seconds per crude estimate.
    pub c0: f64,
    /// Mean wall-clock seconds per control variate estimate, pilots included.
    pub c1: f64,
    pub slowdown: f64,
    pub efficiency: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "repetitions,crude_repetitions,crude_mean,crude_variance,\
pooled_crude_variance,lcv_mean,lcv_variance,reduction,pooled_reduction,model_reduction,mean_cvs,c0,c1,slowdown,efficiency";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.repetitions,
            self.crude_repetitions,
            self.crude_mean,
            self.crude_variance,
            self.pooled_crude_variance,
            self.lcv_mean,
            self.lcv_variance,
            self.reduction,
            self.pooled_reduction,
            self.model_reduction,
            self.mean_cvs,
            self.c0,
            self.c1,
            self.slowdown,
            self.efficiency
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub row: BenchRow,
    pub runs: Vec<RepetitionSummary>,
    pub crude_runs: Vec<CrudeSummary>,
}

fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        (a / b).min(REDUCTION_CAP)
    } else if a > 0.0 {
        REDUCTION_CAP
    } else {
        1.0
    }
}

/// `crude_repetitions` crude estimates and `repetitions` pipeline estimates
/// of `n` trajectories each.
pub fn bench(
    model: &Model,
    query: &TargetQuery,
    config: &SelectionConfig,
    repetitions: usize,
    crude_repetitions: usize,
    seed: u64,
) -> Result<BenchReport> {
    if repetitions < 2 || crude_repetitions < 2 {
        return Err(Error::Config("a benchmark needs at least 2 repetitions of each estimator".into()));
    }
    let cv_config = SelectionConfig { baseline: false, ..config.clone() };
    let mut crude_runs = Vec::with_capacity(crude_repetitions);
    for r in 0..crude_repetitions as u64 {
        let (crude, batch) = crude_estimate(model, query, config.n, derive_seed(seed, "bench-crude", r), config)?;
        crude_runs.push(CrudeSummary { point: crude.point, cost: batch.cost });
    }
    let mut runs = Vec::with_capacity(repetitions);
    for r in 0..repetitions as u64 {
        let cv = run_pipeline(model, query, &cv_config, derive_seed(seed, "bench-cv", r))?;
        runs.push(RepetitionSummary {
            point: cv.estimate.point,
            variance_lcv: cv.estimate.variance_lcv,
            variance_crude: cv.estimate.variance_crude,
            n_cvs: cv.estimate.d,
            cost_cv: cv.costs.cv_total(),
        });
    }
    Ok(BenchReport { row: summarize(&runs, &crude_runs), runs, crude_runs })
}

pub fn summarize(runs: &[RepetitionSummary], crude_runs: &[CrudeSummary]) -> BenchRow {
    let r = runs.len();
    let (crude_mean, crude_variance) = mean_var(crude_runs.iter().map(|s| s.point));
    let (lcv_mean, lcv_variance) = mean_var(runs.iter().map(|s| s.point));
    let pooled_crude_variance = runs.iter().map(|s| s.variance_crude).sum::<f64>() / r as f64;
    let c0 = crude_runs.iter().map(|s| s.cost).sum::<f64>() / crude_runs.len() as f64;
    let c1 = runs.iter().map(|s| s.cost_cv).sum::<f64>() / r as f64;
    let reduction = ratio(crude_variance, lcv_variance);
    let pooled_reduction = ratio(pooled_crude_variance, lcv_variance);
    let slowdown = c1 / c0;
    BenchRow {
        repetitions: r,
        crude_repetitions: crude_runs.len(),
        crude_mean,
        crude_variance,
        pooled_crude_variance,
        lcv_mean,
        lcv_variance,
        reduction,
        pooled_reduction,
        model_reduction: runs.iter().map(|s| ratio(s.variance_crude, s.variance_lcv)).sum::<f64>() / r as f64,
        mean_cvs: runs.iter().map(|s| s.n_cvs as f64).sum::<f64>() / r as f64,
        c0,
        c1,
        slowdown,
        efficiency: efficiency(c0, pooled_crude_variance, c1, lcv_variance).unwrap_or(pooled_reduction / slowdown),
    }
}

/// One threshold level of a probability sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: i64,
    pub probability: f64,
    pub reduction: f64,
    pub slowdown: f64,
    pub efficiency: f64,
    pub mean_cvs: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "level,probability,reduction,slowdown,efficiency,mean_cvs";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.level, self.probability, self.reduction, self.slowdown, self.efficiency, self.mean_cvs
        )
    }
}

/// Estimates `P(X_species(T) <= level)` for each level, averaging the
/// per-estimate efficiency of `repetitions` pipeline runs. Each run measures
/// its own baseline cost.
pub fn threshold_sweep(
    model: &Model,
    species: usize,
    horizon: f64,
    levels: &[i64],
    config: &SelectionConfig,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if repetitions == 0 {
        return Err(Error::Config("a sweep needs at least 1 repetition".into()));
    }
    let config = SelectionConfig { baseline: true, ..config.clone() };
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let query = TargetQuery::ThresholdProbability { species, level, horizon };
        let (mut p, mut red, mut slow, mut eff, mut cvs) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in 0..repetitions as u64 {
            let out = run_pipeline(model, &query, &config, derive_seed(seed, &format!("sweep-{level}"), r))?;
            let e = out.efficiency.ok_or_else(|| Error::Config("baseline cost unavailable".into()))?;
            p += out.estimate.point;
            red += e.reduction;
            slow += e.slowdown;
            eff += e.efficiency;
            cvs += out.estimate.d as f64;
        }
        let k = repetitions as f64;
        rows.push(SweepRow {
            level,
            probability: p / k,
            reduction: red / k,
            slowdown: slow / k,
            efficiency: eff / k,
            mean_cvs: cvs / k,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_arithmetic() {
        let run = |point| RepetitionSummary { point, variance_lcv: 1.0, variance_crude: 4.0, n_cvs: 2, cost_cv: 2.0 };
        let crude = |point| CrudeSummary { point, cost: 1.0 };
        let row = summarize(&[run(1.0), run(2.0)], &[crude(0.0), crude(4.0)]);
        assert_eq!(row.crude_variance, 8.0);
        assert_eq!(row.lcv_variance, 0.5);
        assert_eq!(row.reduction, 16.0);
        assert_eq!(row.pooled_reduction, 8.0);
        assert_eq!(row.model_reduction, 4.0);
        assert_eq!(row.slowdown, 2.0);
        assert_eq!(row.efficiency, 4.0);
        assert_eq!(row.mean_cvs, 2.0);
    }
}
