//! Stochastic reaction network vocabulary: species, reactions, states,
//! trajectories and the quantities estimated from them.

use std::collections::HashSet;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, ModelError, PolynomialityError, SimError};
use crate::moment::Polynomial;
use crate::rate::{to_polynomial, RateExpr};

/// How a reaction's propensity is computed.
#[derive(Debug, Clone, PartialEq)]
pub enum RateLaw {
    /// `c * prod_i binom(x_i, v_i^-)` with a species-free constant `c`.
    MassAction(RateExpr),
    /// Arbitrary propensity expression.
    Expr(RateExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
    pub rate: RateLaw,
}

impl Reaction {
    pub fn mass_action(reactants: Vec<u32>, products: Vec<u32>, constant: f64) -> Self {
        Reaction { reactants, products, rate: RateLaw::MassAction(RateExpr::Const(constant)) }
    }

    /// State change `v+ - v-` applied when the reaction fires.
    pub fn change(&self) -> Vec<i64> {
        self.products.iter().zip(&self.reactants).map(|(&p, &r)| i64::from(p) - i64::from(r)).collect()
    }

    /// Full propensity expression, with mass action expanded into falling
    /// factorials.
    pub fn propensity_expr(&self) -> RateExpr {
        match &self.rate {
            RateLaw::MassAction(c) => RateExpr::mass_action(c.clone(), &self.reactants),
            RateLaw::Expr(e) => e.clone(),
        }
    }
}

/// Free-standing form of `stoich_change`.
pub fn stoich_change(reaction: &Reaction) -> Vec<i64> {
    reaction.change()
}

/// `binom(x, k)` as a float; zero when `x < k`.
pub fn binomial(x: i64, k: u32) -> f64 {
    if x < i64::from(k) {
        return 0.0;
    }
    let mut acc = 1.0f64;
    for i in 0..k {
        acc *= (x - i64::from(i)) as f64 / f64::from(i + 1);
    }
    acc
}

/// `c * prod_i binom(x_i, v_i^-)`.
pub fn mass_action_propensity(constant: f64, reactants: &[u32], state: &[i64]) -> f64 {
    reactants.iter().zip(state).filter(|(&v, _)| v > 0).fold(constant, |acc, (&v, &x)| acc * binomial(x, v))
}

/// Species counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State(pub Vec<i64>);

impl Deref for State {
    type Target = [i64];

    fn deref(&self) -> &[i64] {
        &self.0
    }
}

impl From<Vec<i64>> for State {
    fn from(v: Vec<i64>) -> Self {
        State(v)
    }
}

/// A validated reaction network with a deterministic initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    species: Vec<String>,
    parameters: Vec<(String, f64)>,
    reactions: Vec<Reaction>,
    initial_state: Vec<i64>,
}

impl Model {
    pub fn new(
        species: Vec<String>,
        parameters: Vec<(String, f64)>,
        reactions: Vec<Reaction>,
        initial_state: Vec<i64>,
    ) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for s in &species {
            if !seen.insert(s.as_str()) {
                return Err(ModelError::DuplicateSpecies(s.clone()));
            }
        }
        let mut seen_params = HashSet::new();
        for (p, _) in &parameters {
            if seen.contains(p.as_str()) {
                return Err(ModelError::NameClash(p.clone()));
            }
            if !seen_params.insert(p.as_str()) {
                return Err(ModelError::DuplicateParameter(p.clone()));
            }
        }
        if initial_state.len() != species.len() {
            return Err(ModelError::InitialStateLength { expected: species.len(), got: initial_state.len() });
        }
        if let Some((i, &c)) = initial_state.iter().enumerate().find(|(_, &c)| c < 0) {
            return Err(ModelError::NegativeInitialCount { species: species[i].clone(), count: c });
        }
        let values: Vec<f64> = parameters.iter().map(|(_, v)| *v).collect();
        for (j, r) in reactions.iter().enumerate() {
            if r.reactants.len() != species.len() || r.products.len() != species.len() {
                return Err(ModelError::StoichiometryLength { reaction: j });
            }
            if r.reactants.iter().chain(&r.products).all(|&k| k == 0) {
                return Err(ModelError::EmptyReaction { reaction: j });
            }
            match &r.rate {
                RateLaw::MassAction(c) => {
                    c.check_references(species.len(), values.len())
                        .map_err(|source| ModelError::Rate { reaction: j, source })?;
                    if c.depends_on_species() {
                        return Err(ModelError::SpeciesInRateConstant { reaction: j });
                    }
                    let value = c.eval(&[], &values).map_err(|source| ModelError::Rate { reaction: j, source })?;
                    if !(value > 0.0 && value.is_finite()) {
                        return Err(ModelError::NonPositiveRate { reaction: j, value });
                    }
                }
                RateLaw::Expr(e) => e
                    .check_references(species.len(), values.len())
                    .map_err(|source| ModelError::Rate { reaction: j, source })?,
            }
        }
        Ok(Model { species, parameters, reactions, initial_state })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn parameters(&self) -> &[(String, f64)] {
        &self.parameters
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameters.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn parameter_values(&self) -> Vec<f64> {
        self.parameters.iter().map(|(_, v)| *v).collect()
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn initial_state(&self) -> &[i64] {
        &self.initial_state
    }

    /// Mass-action constant of reaction `j`, if it uses mass action.
    pub fn rate_constant(&self, j: usize) -> Option<f64> {
        match &self.reactions.get(j)?.rate {
            RateLaw::MassAction(c) => c.eval(&[], &self.parameter_values()).ok(),
            RateLaw::Expr(_) => None,
        }
    }

    /// Tree-walk propensity of reaction `j` at `state`.
    pub fn propensity(&self, j: usize, state: &[i64]) -> Result<f64, EvalError> {
        self.reactions[j].propensity_expr().eval(state, &self.parameter_values())
    }

    /// Propensity of reaction `j` as a polynomial in the species counts.
    pub fn propensity_polynomial(&self, j: usize) -> Result<Polynomial, PolynomialityError> {
        to_polynomial(&self.reactions[j].propensity_expr(), &self.parameter_values(), self.n_species())
    }
}

/// Piecewise-constant sample path on `[0, horizon]`: `states[i]` holds on
/// `[jump_times[i-1], jump_times[i])` with `jump_times[-1] = 0` and the last
/// state extending to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub states: Vec<Vec<i64>>,
    /// Index of the reaction fired at each jump.
    pub reactions: Vec<usize>,
}

impl Trajectory {
    pub fn terminal_state(&self) -> &[i64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn initial_state(&self) -> &[i64] {
        &self.states[0]
    }

    /// Iterates `(t_start, t_end, state)` over all segments up to the horizon.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &[i64])> + '_ {
        self.states.iter().enumerate().map(move |(i, s)| {
            let start = if i == 0 { 0.0 } else { self.jump_times[i - 1] };
            let end = self.jump_times.get(i).copied().unwrap_or(self.horizon);
            (start, end, s.as_slice())
        })
    }
}

/// What is estimated from the terminal state of each trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetQuery {
    Mean {
        species: usize,
        horizon: f64,
    },
    /// Probability that the count is at most `level` at the horizon.
    ThresholdProbability {
        species: usize,
        level: i64,
        horizon: f64,
    },
}

impl TargetQuery {
    pub fn horizon(&self) -> f64 {
        match self {
            TargetQuery::Mean { horizon, .. } | TargetQuery::ThresholdProbability { horizon, .. } => *horizon,
        }
    }

    pub fn species(&self) -> usize {
        match self {
            TargetQuery::Mean { species, .. } | TargetQuery::ThresholdProbability { species, .. } => *species,
        }
    }

    /// `V` for one sample, read from the terminal state.
    pub fn value(&self, terminal: &[i64]) -> Result<f64, SimError> {
        let species = self.species();
        let x = *terminal.get(species).ok_or(SimError::SpeciesOutOfRange(species))?;
        Ok(match self {
            TargetQuery::Mean { .. } => x as f64,
            TargetQuery::ThresholdProbability { level, .. } => {
                if x <= *level {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    pub fn validate(&self, model: &Model) -> Result<(), SimError> {
        let h = self.horizon();
        if !(h > 0.0 && h.is_finite()) {
            return Err(SimError::Config(format!("horizon must be positive, got {h}")));
        }
        if let TargetQuery::ThresholdProbability { level, .. } = self {
            if *level < 0 {
                return Err(SimError::Config(format!("threshold level must be non-negative, got {level}")));
            }
        }
        if self.species() >= model.n_species() {
            return Err(SimError::SpeciesOutOfRange(self.species()));
        }
        Ok(())
    }
}

pub fn target_value(trajectory: &Trajectory, query: &TargetQuery) -> Result<f64, SimError> {
    query.value(trajectory.terminal_state())
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn change_vectors() {
        let m = dimerization();
        assert_eq!(stoich_change(&m.reactions()[1]), vec![-2, 1]);
        assert_eq!(stoich_change(&m.reactions()[0]), vec![1, 0]);
        let catalysed = Reaction::mass_action(vec![1, 1, 0], vec![0, 1, 1], 0.001);
        assert_eq!(catalysed.change(), vec![-1, 0, 1]);
    }

    #[test]
    fn mass_action_values() {
        assert_eq!(mass_action_propensity(0.1, &[2, 0], &[5, 0]), 1.0);
        assert_eq!(mass_action_propensity(0.1, &[2, 0], &[1, 0]), 0.0);
        assert_eq!(mass_action_propensity(10.0, &[0, 0], &[123, 4]), 10.0);
        let m = dimerization();
        assert_eq!(m.propensity(1, &[5, 0]).unwrap(), 1.0);
    }

    #[test]
    fn propensity_zero_iff_insufficient_reactants() {
        for x in 0..6i64 {
            for y in 0..4i64 {
                let a = mass_action_propensity(0.5, &[2, 1], &[x, y]);
                assert_eq!(a == 0.0, x < 2 || y < 1, "x={x} y={y}");
            }
        }
    }

    #[test]
    fn threshold_and_mean_targets() {
        let terminal = [7, 3];
        let mean = TargetQuery::Mean { species: 0, horizon: 1.0 };
        assert_eq!(mean.value(&terminal).unwrap(), 7.0);
        let le7 = TargetQuery::ThresholdProbability { species: 0, level: 7, horizon: 1.0 };
        assert_eq!(le7.value(&terminal).unwrap(), 1.0);
        let le6 = TargetQuery::ThresholdProbability { species: 0, level: 6, horizon: 1.0 };
        assert_eq!(le6.value(&terminal).unwrap(), 0.0);
        let bad = TargetQuery::Mean { species: 2, horizon: 1.0 };
        assert_eq!(bad.value(&terminal), Err(SimError::SpeciesOutOfRange(2)));
    }

    #[test]
    fn model_validation() {
        let dup = Model::new(vec!["A".into(), "A".into()], vec![], vec![], vec![0, 0]);
        assert!(matches!(dup, Err(ModelError::DuplicateSpecies(_))));
        let neg = Model::new(vec!["A".into()], vec![], vec![], vec![-1]);
        assert!(matches!(neg, Err(ModelError::NegativeInitialCount { .. })));
        let zero_rate =
            Model::new(vec!["A".into()], vec![], vec![Reaction::mass_action(vec![0], vec![1], 0.0)], vec![0]);
        assert!(matches!(zero_rate, Err(ModelError::NonPositiveRate { .. })));
        let empty = Model::new(vec!["A".into()], vec![], vec![Reaction::mass_action(vec![0], vec![0], 1.0)], vec![0]);
        assert!(matches!(empty, Err(ModelError::EmptyReaction { .. })));
    }
}
