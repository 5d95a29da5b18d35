//! Candidate generation, lambda resampling, and redundancy-aware greedy
//! selection of control variates, plus the end-to-end estimation pipeline.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment::{constraint_expansion, ConstraintExpansion, ControlVariateId, MultiIndex};
use crate::sim::{derive_seed, run_batch, BatchOptions, BatchResult, SimRng, DEFAULT_MAX_EVENTS};
use crate::srn::{Model, TargetQuery};
use crate::stats::{improvement_ratio, lcv_estimate, EfficiencyReport, LcvEstimate, RunningStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Trajectories in the final estimation batch.
    pub n: u64,
    /// Pilot trajectories per resampling round; the covariance batch uses `5 d`.
    pub d: u64,
    pub n_max: u32,
    pub n_lambda: usize,
    pub n_c: usize,
    pub n_s: usize,
    pub n_r: usize,
    pub epsilon: f64,
    pub step_sd: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub max_events: u64,
    pub workers: Option<usize>,
    /// Also run a crude batch of `n` trajectories to measure the baseline cost.
    pub baseline: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            n: 10_000,
            d: 10,
            n_max: 1,
            n_lambda: 10,
            n_c: 2,
            n_s: 2,
            n_r: 3,
            epsilon: 1.05,
            step_sd: 0.5,
            prior_mean: 0.0,
            prior_sd: 1.0,
            max_events: DEFAULT_MAX_EVENTS,
            workers: None,
            baseline: true,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if self.d < 2 {
            return bad("d must be at least 2");
        }
        if self.n_max == 0 || self.n_lambda == 0 || self.n_c == 0 || self.n_s == 0 {
            return bad("n_max, n_lambda, n_c and n_s must be at least 1");
        }
        if !(self.epsilon > 1.0) {
            return bad("epsilon must exceed 1");
        }
        if !(self.step_sd > 0.0 && self.step_sd.is_finite()) {
            return bad("step_sd must be positive");
        }
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite() && self.prior_mean.is_finite()) {
            return bad("lambda prior must have finite mean and positive spread");
        }
        if self.max_events == 0 {
            return bad("event cap must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: ControlVariateId,
    /// Resampling round that produced the candidate; 0 is the initial pool.
    pub round: usize,
    /// Pilot correlation with `V`, once evaluated.
    pub pilot_rho: Option<f64>,
}

impl Candidate {
    pub fn pilot_gamma(&self) -> Option<f64> {
        self.pilot_rho.map(improvement_ratio)
    }
}

/// Ordered candidate list without duplicate `(m, lambda)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CandidatePool {
    candidates: Vec<Candidate>,
    #[serde(skip)]
    seen: BTreeSet<ControlVariateId>,
}

impl CandidatePool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a candidate unless its id is already present.
    pub fn insert(&mut self, id: ControlVariateId, round: usize) -> bool {
        if !self.seen.insert(id.clone()) {
            return false;
        }
        self.candidates.push(Candidate { id, round, pilot_rho: None });
        true
    }

    pub fn contains(&self, id: &ControlVariateId) -> bool {
        self.seen.contains(id)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn ids(&self) -> Vec<ControlVariateId> {
        self.candidates.iter().map(|c| c.id.clone()).collect()
    }

    pub fn set_pilot_rho(&mut self, index: usize, rho: f64) {
        self.candidates[index].pilot_rho = Some(rho);
    }
}

/// The constraint of `id`, or the reason it cannot be used.
pub fn candidate_expansion(
    model: &Model,
    id: &ControlVariateId,
    horizon: f64,
) -> std::result::Result<ConstraintExpansion, String> {
    if !(id.lambda * horizon).exp().is_finite() {
        return Err(format!("e^(lambda T) overflows for lambda = {}", id.lambda));
    }
    constraint_expansion(model, id, horizon).map_err(|e| e.to_string())
}

/// Initial lambdas: `n_lambda - 1` prior draws plus `0`.
pub fn initial_lambdas(config: &SelectionConfig, rng: &mut SimRng) -> Vec<f64> {
    let prior = Normal::new(config.prior_mean, config.prior_sd).expect("validated prior");
    let mut lambdas: Vec<f64> = (1..config.n_lambda).map(|_| prior.sample(rng)).collect();
    lambdas.push(0.0);
    lambdas
}

/// All moments of order `1..=n_max` crossed with the initial lambdas.
/// Candidates whose constraint is not polynomial are left out and reported.
pub fn init_pool(
    model: &Model,
    query: &TargetQuery,
    config: &SelectionConfig,
    rng: &mut SimRng,
) -> (CandidatePool, Vec<SkippedCandidate>) {
    let lambdas = initial_lambdas(config, rng);
    let mut pool = CandidatePool::new();
    let mut skipped = Vec::new();
    for &lambda in &lambdas {
        for m in MultiIndex::enumerate(model.n_species(), config.n_max) {
            let id = ControlVariateId::new(m, lambda);
            match candidate_expansion(model, &id, query.horizon()) {
                Ok(_) => {
                    pool.insert(id, 0);
                }
                Err(reason) => skipped.push(SkippedCandidate { id, reason }),
            }
        }
    }
    (pool, skipped)
}

/// Draws `n_c` parents with probability proportional to their pilot
/// improvement ratio and `n_s` lambda steps around each. Returns the new,
/// previously unseen candidates together with the parent indices.
pub fn resample_round(
    pool: &CandidatePool,
    config: &SelectionConfig,
    rng: &mut SimRng,
) -> (Vec<ControlVariateId>, Vec<usize>) {
    let weights: Vec<f64> = pool.candidates().iter().map(|c| c.pilot_gamma().unwrap_or(1.0)).collect();
    let Ok(dist) = WeightedIndex::new(&weights) else {
        return (Vec::new(), Vec::new());
    };
    let parents: Vec<usize> = (0..config.n_c).map(|_| dist.sample(rng)).collect();
    let mut fresh = Vec::new();
    let mut seen = BTreeSet::new();
    for &k in &parents {
        let parent = &pool.candidates()[k].id;
        let step = Normal::new(parent.lambda, config.step_sd).expect("validated step");
        for _ in 0..config.n_s {
            let id = ControlVariateId::new(parent.moment.clone(), step.sample(rng));
            if !pool.contains(&id) && seen.insert(id.clone()) {
                fresh.push(id);
            }
        }
    }
    (fresh, parents)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub index: usize,
    pub gamma_v: f64,
    pub score: f64,
}

/// Greedy selection on correlations alone.
///
/// `rho_v[i]` is the correlation of candidate `i` with `V`, `rho[i][j]`
/// between candidates. The score of an unselected `i` is
/// `gamma_iv * prod_{j selected} gamma_ij^-1`; the best one is taken while
/// its score exceeds `epsilon`.
pub fn greedy_select_matrix(rho_v: &[f64], rho: &[Vec<f64>], epsilon: f64) -> Vec<Pick> {
    let k = rho_v.len();
    let gamma_v: Vec<f64> = rho_v.iter().map(|&r| improvement_ratio(r)).collect();
    let mut score = gamma_v.clone();
    let mut taken = vec![false; k];
    let mut picks = Vec::new();
    loop {
        let best = (0..k).filter(|&i| !taken[i]).fold(None::<usize>, |best, i| match best {
            Some(b) if score[b] >= score[i] => Some(b),
            _ => Some(i),
        });
        let Some(b) = best else { break };
        if !(score[b] > epsilon) {
            break;
        }
        taken[b] = true;
        picks.push(Pick { index: b, gamma_v: gamma_v[b], score: score[b] });
        for i in 0..k {
            if !taken[i] {
                score[i] /= improvement_ratio(rho[i][b]);
            }
        }
    }
    picks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub id: ControlVariateId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRecord {
    pub id: ControlVariateId,
    pub rho: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundAudit {
    pub round: usize,
    pub evaluated: Vec<PilotRecord>,
    /// Pool indices drawn as parents for the next round.
    pub parents: Vec<usize>,
    pub added: Vec<ControlVariateId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedCv {
    pub id: ControlVariateId,
    pub gamma_v: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub selected: Vec<SelectedCv>,
    /// Full-pool correlation with `V` from the covariance batch.
    pub pool: Vec<PilotRecord>,
    pub rounds: Vec<RoundAudit>,
    pub skipped: Vec<SkippedCandidate>,
}

impl SelectionOutcome {
    pub fn selected_ids(&self) -> Vec<ControlVariateId> {
        self.selected.iter().map(|s| s.id.clone()).collect()
    }
}

/// Greedy selection over a pool using covariance statistics whose `Z`
/// coordinates follow the pool order.
pub fn greedy_select(pool: &CandidatePool, stats: &RunningStats, epsilon: f64) -> Result<SelectionOutcome> {
    let k = pool.len();
    if stats.dim() != k {
        return Err(Error::Config(format!("covariance statistics cover {} variates, pool has {k}", stats.dim())));
    }
    let corr = stats.correlation()?;
    let rho_v: Vec<f64> = (0..k).map(|i| corr[i][k]).collect();
    let picks = greedy_select_matrix(&rho_v, &corr, epsilon);
    let ids = pool.ids();
    Ok(SelectionOutcome {
        selected: picks
            .iter()
            .map(|p| SelectedCv { id: ids[p.index].clone(), gamma_v: p.gamma_v, score: p.score })
            .collect(),
        pool: ids
            .iter()
            .zip(&rho_v)
            .map(|(id, &rho)| PilotRecord { id: id.clone(), rho, gamma: improvement_ratio(rho) })
            .collect(),
        rounds: Vec::new(),
        skipped: Vec::new(),
    })
}

/// Wall-clock seconds spent simulating in each stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCosts {
    pub baseline: f64,
    pub pilot: f64,
    pub covariance: f64,
    pub estimation: f64,
    pub baseline_per_trajectory: f64,
    pub estimation_per_trajectory: f64,
}

impl StageCosts {
    /// Total cost of the control variate estimate.
    pub fn cv_total(&self) -> f64 {
        self.pilot + self.covariance + self.estimation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub estimate: LcvEstimate,
    pub mean_v: f64,
    pub selection: SelectionOutcome,
    pub costs: StageCosts,
    /// Present when a baseline batch was run.
    pub efficiency: Option<EfficiencyReport>,
    pub baseline: Option<LcvEstimate>,
}

fn expansions_for(model: &Model, ids: &[ControlVariateId], horizon: f64) -> Result<Vec<ConstraintExpansion>> {
    ids.iter()
        .map(|id| candidate_expansion(model, id, horizon).map_err(|reason| Error::Config(format!("{id}: {reason}"))))
        .collect()
}

fn batch(
    model: &Model,
    query: &TargetQuery,
    exps: &[ConstraintExpansion],
    n: u64,
    seed: u64,
    config: &SelectionConfig,
) -> Result<BatchResult> {
    let mut opts = BatchOptions::new(n, seed).workers(config.workers);
    opts.max_events = config.max_events;
    run_batch(model, query, exps, &opts)
}

/// Simulates `n` trajectories with a fixed set of control variates and
/// returns the LCV estimate alongside the raw batch.
pub fn estimate_with(
    model: &Model,
    query: &TargetQuery,
    ids: &[ControlVariateId],
    n: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<(LcvEstimate, BatchResult)> {
    let exps = expansions_for(model, ids, query.horizon())?;
    let opts = BatchOptions::new(n, seed).workers(workers).keep_samples(true);
    let result = run_batch(model, query, &exps, &opts)?;
    Ok((lcv_estimate(&result.stats)?, result))
}

/// Crude estimate from `n` plain trajectories.
pub fn crude_estimate(
    model: &Model,
    query: &TargetQuery,
    n: u64,
    seed: u64,
    config: &SelectionConfig,
) -> Result<(LcvEstimate, BatchResult)> {
    let result = batch(model, query, &[], n, seed, config)?;
    Ok((lcv_estimate(&result.stats)?, result))
}

/// Initial pool, `n_r` pilot rounds, full-pool covariance batch, greedy
/// selection, then a fresh estimation batch with the selected variates.
pub fn run_pipeline(model: &Model, query: &TargetQuery, config: &SelectionConfig, seed: u64) -> Result<PipelineResult> {
    config.validate()?;
    query.validate(model)?;
    let horizon = query.horizon();
    let mut costs = StageCosts::default();

    let mut rng = SimRng::seed_from_u64(derive_seed(seed, "init", 0));
    let (mut pool, skipped) = init_pool(model, query, config, &mut rng);

    let mut rounds = Vec::new();
    let mut fresh: Vec<usize> = (0..pool.len()).collect();
    for round in 0..config.n_r {
        let mut audit = RoundAudit { round, evaluated: Vec::new(), parents: Vec::new(), added: Vec::new() };
        if !fresh.is_empty() {
            let ids: Vec<_> = fresh.iter().map(|&i| pool.candidates()[i].id.clone()).collect();
            let exps = expansions_for(model, &ids, horizon)?;
            let pilot = batch(model, query, &exps, config.d, derive_seed(seed, "pilot", round as u64), config)?;
            costs.pilot += pilot.cost;
            for (slot, &i) in fresh.iter().enumerate() {
                let rho = pilot.stats.correlation_with_v(slot)?;
                pool.set_pilot_rho(i, rho);
                audit.evaluated.push(PilotRecord { id: ids[slot].clone(), rho, gamma: improvement_ratio(rho) });
            }
        }
        fresh.clear();
        // descendants of the final round would never be evaluated
        if round + 1 < config.n_r && !pool.is_empty() {
            let mut rs = SimRng::seed_from_u64(derive_seed(seed, "resample", round as u64));
            let (new_ids, parents) = resample_round(&pool, config, &mut rs);
            audit.parents = parents;
            for id in new_ids {
                if candidate_expansion(model, &id, horizon).is_ok() && pool.insert(id.clone(), round + 1) {
                    fresh.push(pool.len() - 1);
                    audit.added.push(id);
                }
            }
        }
        rounds.push(audit);
    }

    let mut selection = if pool.is_empty() {
        SelectionOutcome { selected: Vec::new(), pool: Vec::new(), rounds: Vec::new(), skipped: Vec::new() }
    } else {
        let exps = expansions_for(model, &pool.ids(), horizon)?;
        let cov = batch(model, query, &exps, 5 * config.d, derive_seed(seed, "covariance", 0), config)?;
        costs.covariance = cov.cost;
        greedy_select(&pool, &cov.stats, config.epsilon)?
    };
    selection.rounds = rounds;
    selection.skipped = skipped;

    let exps = expansions_for(model, &selection.selected_ids(), horizon)?;
    let final_batch = batch(model, query, &exps, config.n, derive_seed(seed, "estimate", 0), config)?;
    costs.estimation = final_batch.cost;
    costs.estimation_per_trajectory = final_batch.mean_cost();
    let estimate = lcv_estimate(&final_batch.stats)?;

    let (efficiency, baseline) = if config.baseline {
        let (crude, base) = crude_estimate(model, query, config.n, derive_seed(seed, "baseline", 0), config)?;
        costs.baseline = base.cost;
        costs.baseline_per_trajectory = base.mean_cost();
        let report = if base.cost > 0.0 && costs.cv_total() > 0.0 {
            Some(EfficiencyReport::new(base.cost, estimate.variance_crude, costs.cv_total(), estimate.variance_lcv)?)
        } else {
            None
        };
        (report, Some(crude))
    } else {
        (None, None)
    };

    Ok(PipelineResult { mean_v: final_batch.stats.mean_v(), estimate, selection, costs, efficiency, baseline })
}
