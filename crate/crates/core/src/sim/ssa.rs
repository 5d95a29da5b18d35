use std::collections::BTreeSet;

use rand::Rng;

use crate::error::SimError;
use crate::moment::{AccumulatorKey, ConstraintExpansion};
use crate::rate::StackProgram;
use crate::srn::{Model, Trajectory};

pub const DEFAULT_MAX_EVENTS: u64 = 100_000_000;

/// Below this `|lambda dt|` a segment weight is taken via `expm1` instead of
/// the difference of two exponentials.
const SMALL_EXPONENT: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub max_events: u64,
}

impl SimConfig {
    pub fn new(horizon: f64) -> Self {
        SimConfig { horizon, max_events: DEFAULT_MAX_EVENTS }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!("horizon must be positive and finite, got {}", self.horizon)));
        }
        if self.max_events == 0 {
            return Err(SimError::Config("event cap must be positive".into()));
        }
        Ok(())
    }
}

/// A model lowered for the inner simulation loop: one stack program per
/// reaction and sparse change vectors.
#[derive(Debug, Clone)]
pub struct Simulator {
    programs: Vec<StackProgram>,
    changes: Vec<Vec<(usize, i64)>>,
    params: Vec<f64>,
    initial: Vec<i64>,
}

impl Simulator {
    pub fn new(model: &Model) -> Result<Self, SimError> {
        let n = model.n_species();
        let params = model.parameter_values();
        let programs = model
            .reactions()
            .iter()
            .map(|r| StackProgram::compile(&r.propensity_expr(), n, params.len()))
            .collect::<Result<Vec<_>, _>>()?;
        let changes = model
            .reactions()
            .iter()
            .map(|r| r.change().into_iter().enumerate().filter(|(_, c)| *c != 0).collect())
            .collect();
        Ok(Simulator { programs, changes, params, initial: model.initial_state().to_vec() })
    }

    pub fn n_species(&self) -> usize {
        self.initial.len()
    }

    pub fn initial_state(&self) -> &[i64] {
        &self.initial
    }

    /// Direct-method SSA on `[0, horizon]`. `on_segment(t0, t1, x)` sees every
    /// constant piece, the last one ending at the horizon; `on_jump(t, k, x)`
    /// sees the post-jump state. Returns the terminal state and event count.
    fn run<R, S, J>(
        &self,
        config: &SimConfig,
        rng: &mut R,
        mut on_segment: S,
        mut on_jump: J,
    ) -> Result<(Vec<i64>, u64), SimError>
    where
        R: Rng + ?Sized,
        S: FnMut(f64, f64, &[i64]),
        J: FnMut(f64, usize, &[i64]),
    {
        let horizon = config.horizon;
        let mut state = self.initial.clone();
        let mut props = vec![0.0f64; self.programs.len()];
        let mut t = 0.0f64;
        let mut events = 0u64;
        loop {
            let mut total = 0.0;
            for (j, prog) in self.programs.iter().enumerate() {
                let a = prog.evaluate(&state, &self.params)?;
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(SimError::InvalidPropensity { reaction: j, value: a });
                }
                props[j] = a;
                total += a;
            }
            if total <= 0.0 {
                // absorbing
                on_segment(t, horizon, &state);
                return Ok((state, events));
            }
            let u: f64 = rng.random();
            let t_next = t - (1.0 - u).ln() / total;
            if t_next >= horizon {
                on_segment(t, horizon, &state);
                return Ok((state, events));
            }
            on_segment(t, t_next, &state);

            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut fired = None;
            for (j, &a) in props.iter().enumerate() {
                if a > 0.0 {
                    fired = Some(j);
                    acc += a;
                    if target < acc {
                        break;
                    }
                }
            }
            let k = fired.expect("positive total propensity");
            for &(s, c) in &self.changes[k] {
                state[s] += c;
                if state[s] < 0 {
                    return Err(SimError::NegativeState { reaction: k, species: s });
                }
            }
            t = t_next;
            events += 1;
            if events > config.max_events {
                return Err(SimError::EventCapExceeded(config.max_events));
            }
            on_jump(t, k, &state);
        }
    }

    pub fn simulate<R: Rng + ?Sized>(&self, config: &SimConfig, rng: &mut R) -> Result<Trajectory, SimError> {
        config.validate()?;
        let mut jump_times = Vec::new();
        let mut states = vec![self.initial.clone()];
        let mut reactions = Vec::new();
        self.run(
            config,
            rng,
            |_, _, _| {},
            |t, k, x| {
                jump_times.push(t);
                states.push(x.to_vec());
                reactions.push(k);
            },
        )?;
        Ok(Trajectory { horizon: config.horizon, jump_times, states, reactions })
    }

    /// SSA that integrates `e^(lambda t) x^m` for every key while stepping,
    /// without storing the path.
    pub fn simulate_with_accumulators<R: Rng + ?Sized>(
        &self,
        config: &SimConfig,
        plan: &AccumulatorPlan,
        rng: &mut R,
    ) -> Result<(Vec<i64>, AccumulatorMap, u64), SimError> {
        config.validate()?;
        let mut values = vec![0.0; plan.keys.len()];
        let mut weights = vec![1.0; plan.groups.len()];
        let (terminal, events) =
            self.run(config, rng, |t0, t1, x| plan.accumulate(t0, t1, x, &mut weights, &mut values), |_, _, _| {})?;
        Ok((terminal, AccumulatorMap { keys: plan.keys.clone(), values }, events))
    }

    /// Fast path for batches: accumulates into caller-owned buffers.
    pub(crate) fn run_accumulating<R: Rng + ?Sized>(
        &self,
        config: &SimConfig,
        plan: &AccumulatorPlan,
        rng: &mut R,
        values: &mut [f64],
        weights: &mut [f64],
    ) -> Result<(Vec<i64>, u64), SimError> {
        values.iter_mut().for_each(|v| *v = 0.0);
        weights.iter_mut().for_each(|w| *w = 1.0);
        self.run(config, rng, |t0, t1, x| plan.accumulate(t0, t1, x, weights, values), |_, _, _| {})
    }
}

/// Monomials sharing one weight `lambda`; one exponential per jump serves all.
#[derive(Debug, Clone)]
struct LambdaGroup {
    lambda: f64,
    start: usize,
    // sparse exponents per monomial, slots start..start+len
    monomials: Vec<Vec<(usize, u32)>>,
}

/// Precompiled accumulator layout for a fixed key set.
#[derive(Debug, Clone, Default)]
pub struct AccumulatorPlan {
    keys: Vec<AccumulatorKey>,
    groups: Vec<LambdaGroup>,
}

impl AccumulatorPlan {
    pub fn new(keys: &BTreeSet<AccumulatorKey>) -> Self {
        let keys: Vec<AccumulatorKey> = keys.iter().cloned().collect();
        let mut groups: Vec<LambdaGroup> = Vec::new();
        for (slot, key) in keys.iter().enumerate() {
            let sparse = key.moment.0.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e)).collect();
            match groups.last_mut() {
                Some(g) if g.lambda.to_bits() == key.lambda.to_bits() => g.monomials.push(sparse),
                _ => groups.push(LambdaGroup { lambda: key.lambda, start: slot, monomials: vec![sparse] }),
            }
        }
        AccumulatorPlan { keys, groups }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn n_weights(&self) -> usize {
        self.groups.len()
    }

    pub fn keys(&self) -> &[AccumulatorKey] {
        &self.keys
    }

    pub fn slot(&self, key: &AccumulatorKey) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    #[inline]
    fn accumulate(&self, t0: f64, t1: f64, x: &[i64], weights: &mut [f64], values: &mut [f64]) {
        let dt = t1 - t0;
        for (g, w_prev) in self.groups.iter().zip(weights.iter_mut()) {
            let lambda = g.lambda;
            let seg = if lambda == 0.0 {
                dt
            } else {
                let w_next = (lambda * t1).exp();
                let seg = if (lambda * dt).abs() < SMALL_EXPONENT {
                    *w_prev * (lambda * dt).exp_m1() / lambda
                } else {
                    (w_next - *w_prev) / lambda
                };
                *w_prev = w_next;
                seg
            };
            for (slot, mono) in values[g.start..g.start + g.monomials.len()].iter_mut().zip(&g.monomials) {
                let mut xm = 1.0;
                for &(i, e) in mono {
                    let xi = x[i] as f64;
                    xm *= if e == 1 { xi } else { xi.powi(e as i32) };
                }
                *slot += seg * xm;
            }
        }
    }
}

/// Running integrals `int_0^T e^(lambda t) X_t^m dt` by key.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorMap {
    keys: Vec<AccumulatorKey>,
    values: Vec<f64>,
}

impl AccumulatorMap {
    pub fn get(&self, key: &AccumulatorKey) -> Option<f64> {
        self.keys.binary_search(key).ok().map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AccumulatorKey, f64)> {
        self.keys.iter().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Post-hoc weighted integral of `x^m` over a stored trajectory.
pub fn path_integral(trajectory: &Trajectory, key: &AccumulatorKey) -> f64 {
    trajectory
        .segments()
        .map(|(t0, t1, x)| {
            let w = if key.lambda == 0.0 {
                t1 - t0
            } else {
                ((key.lambda * t1).exp() - (key.lambda * t0).exp()) / key.lambda
            };
            w * key.moment.eval(x)
        })
        .sum()
}

pub fn simulate<R: Rng + ?Sized>(model: &Model, config: &SimConfig, rng: &mut R) -> Result<Trajectory, SimError> {
    Simulator::new(model)?.simulate(config, rng)
}

pub fn simulate_with_accumulators<R: Rng + ?Sized>(
    model: &Model,
    config: &SimConfig,
    keys: &BTreeSet<AccumulatorKey>,
    rng: &mut R,
) -> Result<(Vec<i64>, AccumulatorMap), SimError> {
    let (terminal, acc, _) =
        Simulator::new(model)?.simulate_with_accumulators(config, &AccumulatorPlan::new(keys), rng)?;
    Ok((terminal, acc))
}

/// `Z` for one trajectory from its terminal state and running integrals.
pub fn z_realization(
    terminal: &[i64],
    accumulators: &AccumulatorMap,
    expansion: &ConstraintExpansion,
) -> Result<f64, SimError> {
    let mut missing = None;
    let z = expansion.realize(terminal, |k| {
        let v = accumulators.get(k);
        if v.is_none() {
            missing = Some(k.clone());
        }
        v
    });
    z.ok_or_else(|| {
        let k = missing.expect("realize fails only on a missing key");
        SimError::MissingAccumulator { monomial: k.moment.0, lambda: k.lambda }
    })
}

/// `Z` evaluation against a fixed accumulator slot layout.
#[derive(Debug, Clone)]
pub(crate) struct ZPlan {
    moment: Vec<(usize, u32)>,
    terminal_coefficient: f64,
    offset: f64,
    slots: Vec<(usize, f64)>,
}

impl ZPlan {
    pub(crate) fn new(expansion: &ConstraintExpansion, plan: &AccumulatorPlan) -> Result<Self, SimError> {
        let mut offset = expansion.initial_value;
        let mut slots = Vec::new();
        for (m, c) in expansion.integral_terms.terms() {
            if m.is_constant() {
                offset += c * crate::moment::weight_integral(expansion.id.lambda, expansion.horizon);
            } else {
                let key = AccumulatorKey { moment: m.clone(), lambda: expansion.id.lambda };
                let slot = plan
                    .slot(&key)
                    .ok_or(SimError::MissingAccumulator { monomial: m.0.clone(), lambda: expansion.id.lambda })?;
                slots.push((slot, c));
            }
        }
        Ok(ZPlan {
            moment: expansion.id.moment.0.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e)).collect(),
            terminal_coefficient: expansion.terminal_coefficient,
            offset,
            slots,
        })
    }

    #[inline]
    pub(crate) fn eval(&self, terminal: &[i64], values: &[f64]) -> f64 {
        let xm: f64 = self.moment.iter().map(|&(i, e)| (terminal[i] as f64).powi(e as i32)).product();
        let mut z = self.terminal_coefficient * xm - self.offset;
        for &(slot, c) in &self.slots {
            z -= c * values[slot];
        }
        z
    }
}
