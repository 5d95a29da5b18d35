use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SimError};
use crate::moment::{accumulator_keys, ConstraintExpansion};
use crate::sim::ssa::{AccumulatorPlan, Simulator, ZPlan, DEFAULT_MAX_EVENTS};
use crate::sim::{trajectory_rng, SimConfig};
use crate::srn::{Model, TargetQuery};
use crate::stats::RunningStats;

/// Trajectories per work unit. Fixed so that results do not depend on the
/// number of workers.
pub const BLOCK_SIZE: u64 = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub n: u64,
    /// Stage seed; trajectory `i` draws from stream `i` of this seed.
    pub seed: u64,
    /// `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub keep_samples: bool,
    pub max_events: u64,
}

impl BatchOptions {
    pub fn new(n: u64, seed: u64) -> Self {
        BatchOptions { n, seed, workers: None, keep_samples: false, max_events: DEFAULT_MAX_EVENTS }
    }

    pub fn workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn keep_samples(mut self, keep: bool) -> Self {
        self.keep_samples = keep;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub v: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub stats: RunningStats,
    pub samples: Option<Vec<Sample>>,
    /// Summed wall-clock seconds spent inside individual trajectories.
    pub cost: f64,
    pub events: u64,
}

impl BatchResult {
    pub fn mean_cost(&self) -> f64 {
        let n = self.stats.count();
        if n == 0 {
            0.0
        } else {
            self.cost / n as f64
        }
    }
}

struct Prepared {
    sim: Simulator,
    plan: AccumulatorPlan,
    zplans: Vec<ZPlan>,
    config: SimConfig,
}

fn run_block(p: &Prepared, query: &TargetQuery, opts: &BatchOptions, block: u64) -> Result<BatchResult, SimError> {
    let start = block * BLOCK_SIZE;
    let end = (start + BLOCK_SIZE).min(opts.n);
    let d = p.zplans.len();
    let mut stats = RunningStats::new(d);
    let mut samples = opts.keep_samples.then(Vec::new);
    let mut values = vec![0.0; p.plan.len()];
    let mut weights = vec![1.0; p.plan.n_weights()];
    let mut z = vec![0.0; d];
    let mut cost = 0.0;
    let mut events = 0;
    for i in start..end {
        let mut rng = trajectory_rng(opts.seed, i);
        let clock = Instant::now();
        let (terminal, ev) = p.sim.run_accumulating(&p.config, &p.plan, &mut rng, &mut values, &mut weights)?;
        let v = query.value(&terminal)?;
        for (zk, zp) in z.iter_mut().zip(&p.zplans) {
            *zk = zp.eval(&terminal, &values);
        }
        cost += clock.elapsed().as_secs_f64();
        events += ev;
        stats.push(v, &z).expect("fixed dimension");
        if let Some(s) = samples.as_mut() {
            s.push(Sample { v, z: z.clone() });
        }
    }
    Ok(BatchResult { stats, samples, cost, events })
}

/// Runs `opts.n` independent trajectories and collects `(V, Z)` statistics.
///
/// Output other than `cost` is a pure function of the inputs: blocks of
/// [`BLOCK_SIZE`] trajectories are merged in index order whatever the
/// execution schedule.
pub fn run_batch(
    model: &Model,
    query: &TargetQuery,
    expansions: &[ConstraintExpansion],
    opts: &BatchOptions,
) -> Result<BatchResult> {
    if opts.n < 2 {
        return Err(Error::Config(format!("a batch needs at least 2 trajectories, got {}", opts.n)));
    }
    query.validate(model)?;
    let horizon = query.horizon();
    if let Some(e) = expansions.iter().find(|e| e.horizon != horizon) {
        return Err(Error::Config(format!("constraint {} has horizon {}, query has {horizon}", e.id, e.horizon)));
    }
    let config = SimConfig { horizon, max_events: opts.max_events };
    config.validate()?;
    let sim = Simulator::new(model)?;
    let plan = AccumulatorPlan::new(&accumulator_keys(expansions));
    let zplans = expansions.iter().map(|e| ZPlan::new(e, &plan)).collect::<Result<Vec<_>, _>>()?;
    let prepared = Prepared { sim, plan, zplans, config };

    let n_blocks = opts.n.div_ceil(BLOCK_SIZE);
    let work = || -> Result<Vec<BatchResult>, SimError> {
        (0..n_blocks).into_par_iter().map(|b| run_block(&prepared, query, opts, b)).collect()
    };
    let blocks = match opts.workers {
        Some(w) if n_blocks > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(work),
        _ => work(),
    }?;

    let mut total = BatchResult {
        stats: RunningStats::new(expansions.len()),
        samples: opts.keep_samples.then(Vec::new),
        cost: 0.0,
        events: 0,
    };
    for b in blocks {
        total.stats.merge(&b.stats)?;
        if let (Some(all), Some(s)) = (total.samples.as_mut(), b.samples) {
            all.extend(s);
        }
        total.cost += b.cost;
        total.events += b.events;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment::{constraint_expansion, ControlVariateId, MultiIndex};
    use crate::srn::Reaction;

    fn dimerization() -> Model {
        Model::new(
            vec!["M".into(), "D".into()],
            vec![],
            vec![
                Reaction::mass_action(vec![0, 0], vec![1, 0], 10.0),
                Reaction::mass_action(vec![2, 0], vec![0, 1], 0.1),
            ],
            vec![0, 0],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_and_shaped() {
        let model = dimerization();
        let q = TargetQuery::Mean { species: 0, horizon: 2.0 };
        let exps: Vec<_> = (0..10)
            .map(|i| {
                let m = if i % 2 == 0 { vec![1, 0] } else { vec![0, 1] };
                constraint_expansion(&model, &ControlVariateId::new(MultiIndex(m), i as f64 * 0.3 - 1.0), 2.0).unwrap()
            })
            .collect();
        let opts = BatchOptions::new(300, 11).keep_samples(true);
        let a = run_batch(&model, &q, &exps, &opts).unwrap();
        let b = run_batch(&model, &q, &exps, &opts.clone().workers(Some(3))).unwrap();
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.samples, b.samples);
        let samples = a.samples.unwrap();
        assert_eq!(samples.len(), 300);
        assert!(samples.iter().all(|s| s.z.len() == 10));
    }

    #[test]
    fn empty_expansions() {
        let model = dimerization();
        let q = TargetQuery::Mean { species: 0, horizon: 1.0 };
        let r = run_batch(&model, &q, &[], &BatchOptions::new(2, 0)).unwrap();
        assert_eq!(r.stats.dim(), 0);
        assert_eq!(r.stats.count(), 2);
        assert!(run_batch(&model, &q, &[], &BatchOptions::new(1, 0)).is_err());
    }
}
