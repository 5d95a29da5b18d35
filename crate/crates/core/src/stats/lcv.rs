use serde::{Deserialize, Serialize};

use crate::error::StatsError;
use crate::stats::RunningStats;

/// Pivots below this (on the correlation scale) mark a variate as redundant.
pub const PIVOT_TOL: f64 = 1e-10;
/// `|rho|` beyond which the improvement ratio saturates.
pub const RHO_CAP: f64 = 0.9999995;
pub const IMPROVEMENT_CAP: f64 = 1e6;
/// Upper bound reported for variance reduction factors, keeps output finite.
pub const REDUCTION_CAP: f64 = 1e12;

/// Regression coefficients of `V` on the retained control variates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    /// One entry per input variate; dropped ones are zero.
    pub beta: Vec<f64>,
    pub r_squared: f64,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcvEstimate {
    pub point: f64,
    pub beta: Vec<f64>,
    pub variance_crude: f64,
    pub variance_lcv: f64,
    pub r_squared: f64,
    /// Number of variates actually used after dropping.
    pub d: usize,
    pub n: u64,
    pub dropped: Vec<usize>,
}

impl LcvEstimate {
    pub fn std_error(&self) -> f64 {
        self.variance_lcv.max(0.0).sqrt()
    }

    pub fn std_error_crude(&self) -> f64 {
        self.variance_crude.max(0.0).sqrt()
    }

    /// `variance_crude / variance_lcv`, saturating at [`REDUCTION_CAP`].
    pub fn reduction_factor(&self) -> f64 {
        reduction_ratio(self.variance_crude, self.variance_lcv)
    }
}

fn reduction_ratio(var0: f64, var1: f64) -> f64 {
    if var1 <= 0.0 {
        if var0 <= 0.0 {
            1.0
        } else {
            REDUCTION_CAP
        }
    } else {
        (var0 / var1).min(REDUCTION_CAP)
    }
}

fn min_samples(d: usize) -> u64 {
    if d == 0 {
        2
    } else {
        d as u64 + 3
    }
}

/// Solves `Sigma_Z beta = Sigma_ZV` by a Cholesky factorisation of the
/// correlation matrix of `Z`, taken in input order. A variate whose pivot
/// falls below [`PIVOT_TOL`], or whose variance is zero, is dropped.
pub fn estimate_beta(stats: &RunningStats) -> Result<BetaFit, StatsError> {
    let d = stats.dim();
    let needed = min_samples(d);
    if stats.count() < needed {
        return Err(StatsError::TooFewSamples { needed, have: stats.count() });
    }
    let c = stats.covariance()?;
    let s_v = c[d][d].max(0.0).sqrt();
    let mut dropped = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut scale: Vec<f64> = Vec::new();
    // rows of L over kept variates, and the forward-solved y
    let mut l: Vec<Vec<f64>> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    for k in 0..d {
        let s_k = c[k][k].sqrt();
        if !(s_k > 0.0 && s_k.is_finite()) || !c[k][d].is_finite() {
            dropped.push(k);
            continue;
        }
        let row_r: Vec<f64> = kept.iter().zip(&scale).map(|(&j, &s_j)| c[k][j] / (s_k * s_j)).collect();
        let mut row = Vec::with_capacity(kept.len() + 1);
        for (a, r_ka) in row_r.iter().enumerate() {
            let dot: f64 = (0..a).map(|b| row[b] * l[a][b]).sum();
            row.push((r_ka - dot) / l[a][a]);
        }
        let pivot = 1.0 - row.iter().map(|x| x * x).sum::<f64>();
        if !(pivot >= PIVOT_TOL) {
            dropped.push(k);
            continue;
        }
        let diag = pivot.sqrt();
        let r_kv = if s_v > 0.0 { c[k][d] / (s_k * s_v) } else { 0.0 };
        let dot: f64 = row.iter().zip(&y).map(|(a, b)| a * b).sum();
        y.push((r_kv - dot) / diag);
        row.push(diag);
        l.push(row);
        kept.push(k);
        scale.push(s_k);
    }
    let r_squared = y.iter().map(|v| v * v).sum::<f64>().clamp(0.0, 1.0);
    // back substitution L^T b = y
    let m = kept.len();
    let mut b = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| l[j][i] * b[j]).sum();
        b[i] = (y[i] - s) / l[i][i];
    }
    let mut beta = vec![0.0; d];
    for (i, &k) in kept.iter().enumerate() {
        beta[k] = b[i] * s_v / scale[i];
    }
    Ok(BetaFit { beta, r_squared, kept, dropped })
}

/// Linear control variate estimate `mean_V - beta^T mean_Z` with the
/// finite-sample variance `((n-2)/(n-2-d)) (1-R^2) sigma_V^2 / n`.
///
/// The variance formula assumes `(Z, V)` jointly normal; it is applied
/// regardless.
pub fn lcv_estimate(stats: &RunningStats) -> Result<LcvEstimate, StatsError> {
    let fit = estimate_beta(stats)?;
    let n = stats.count();
    let nf = n as f64;
    let var_v = stats.var_v()?;
    let d = fit.kept.len();
    let point = stats.mean_v() - fit.beta.iter().zip(stats.mean_z()).map(|(b, z)| b * z).sum::<f64>();
    let factor = if d == 0 { 1.0 } else { (nf - 2.0) / (nf - 2.0 - d as f64) };
    let variance_crude = var_v / nf;
    Ok(LcvEstimate {
        point,
        beta: fit.beta,
        variance_crude,
        variance_lcv: factor * (1.0 - fit.r_squared) * variance_crude,
        r_squared: fit.r_squared,
        d,
        n,
        dropped: fit.dropped,
    })
}

/// `(1 - rho^2)^-1`, saturating at [`IMPROVEMENT_CAP`].
pub fn improvement_ratio(rho: f64) -> f64 {
    if !rho.is_finite() {
        return 1.0;
    }
    if rho.abs() > RHO_CAP {
        IMPROVEMENT_CAP
    } else {
        (1.0 / (1.0 - rho * rho)).min(IMPROVEMENT_CAP)
    }
}

/// Cost-weighted variance ratio `(c0 var0) / (c1 var1)`.
pub fn efficiency(c0: f64, var0: f64, c1: f64, var1: f64) -> Result<f64, StatsError> {
    for (x, name) in [(c0, "c0"), (var0, "var0"), (c1, "c1"), (var1, "var1")] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(StatsError::NonPositive(name));
        }
    }
    Ok((c0 * var0) / (c1 * var1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    /// Cost of the baseline estimate.
    pub c0: f64,
    /// Cost of the control variate estimate, pilots included.
    pub c1: f64,
    pub variance_crude: f64,
    pub variance_lcv: f64,
    pub reduction: f64,
    pub slowdown: f64,
    pub efficiency: f64,
}

impl EfficiencyReport {
    /// Builds a report with the reduction factor saturated so that a perfect
    /// control variate still yields finite numbers.
    pub fn new(c0: f64, var0: f64, c1: f64, var1: f64) -> Result<Self, StatsError> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(StatsError::NonPositive("c0"));
        }
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(StatsError::NonPositive("c1"));
        }
        if !(var0 >= 0.0 && var1 >= 0.0) {
            return Err(StatsError::NonPositive("variance"));
        }
        let reduction = reduction_ratio(var0, var1);
        let slowdown = c1 / c0;
        Ok(EfficiencyReport {
            c0,
            c1,
            variance_crude: var0,
            variance_lcv: var1,
            reduction,
            slowdown,
            efficiency: reduction / slowdown,
        })
    }
}
