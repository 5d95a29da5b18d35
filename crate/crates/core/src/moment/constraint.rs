use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::PolynomialityError;
use crate::moment::{MultiIndex, Polynomial};
use crate::srn::Model;

/// Weights with `|lambda|` below this are treated as exactly zero.
pub const LAMBDA_ZERO_TOL: f64 = 1e-12;

pub fn normalize_lambda(lambda: f64) -> f64 {
    if lambda.abs() < LAMBDA_ZERO_TOL {
        0.0
    } else {
        lambda
    }
}

/// `int_0^T e^(lambda t) dt`, with the `lambda -> 0` limit `T`.
pub fn weight_integral(lambda: f64, horizon: f64) -> f64 {
    if lambda == 0.0 {
        horizon
    } else {
        (lambda * horizon).exp_m1() / lambda
    }
}

/// Moment exponent and exponential time weight naming one control variate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlVariateId {
    pub moment: MultiIndex,
    pub lambda: f64,
}

impl ControlVariateId {
    pub fn new(moment: MultiIndex, lambda: f64) -> Self {
        ControlVariateId { moment, lambda: normalize_lambda(lambda) }
    }
}

impl PartialEq for ControlVariateId {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ControlVariateId {}

impl PartialOrd for ControlVariateId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ControlVariateId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.moment.cmp(&other.moment).then(self.lambda.total_cmp(&other.lambda))
    }
}

impl fmt::Display for ControlVariateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m={} lambda={}", self.moment, self.lambda)
    }
}

/// Key of one running integral `int e^(lambda t) x^m dt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccumulatorKey {
    pub moment: MultiIndex,
    pub lambda: f64,
}

impl PartialEq for AccumulatorKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for AccumulatorKey {}

impl PartialOrd for AccumulatorKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AccumulatorKey {
    // lambda first so keys sharing a weight are adjacent
    fn cmp(&self, other: &Self) -> Ordering {
        self.lambda.total_cmp(&other.lambda).then_with(|| self.moment.cmp(&other.moment))
    }
}

/// `sum_j (f(x + v_j) - f(x)) alpha_j(x)` for `f(x) = x^m`.
///
/// Reactions that leave `x^m` unchanged are skipped, so a non-polynomial
/// rate law only fails the moments it actually affects.
pub fn moment_drift(model: &Model, m: &MultiIndex) -> Result<Polynomial, PolynomialityError> {
    let n = model.n_species();
    let f = Polynomial::monomial(m.clone(), 1.0);
    let mut drift = Polynomial::zero(n);
    for (j, reaction) in model.reactions().iter().enumerate() {
        let diff = &f.shift(&reaction.change()) - &f;
        if diff.is_zero() {
            continue;
        }
        let alpha = model.propensity_polynomial(j)?;
        drift = &drift + &(&diff * &alpha);
    }
    Ok(drift)
}

/// Concrete coefficients of one zero-mean constraint
///
/// `Z = e^(lambda T) x_T^m - x_0^m - int_0^T e^(lambda t) q(X_t) dt`
///
/// where `q = lambda x^m + drift_m` is stored in `integral_terms`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintExpansion {
    pub id: ControlVariateId,
    pub horizon: f64,
    pub terminal_coefficient: f64,
    /// `x_0^m` at the deterministic initial state.
    pub initial_value: f64,
    pub integral_terms: Polynomial,
}

impl ConstraintExpansion {
    /// Keys of the non-constant integral monomials.
    pub fn keys(&self) -> impl Iterator<Item = AccumulatorKey> + '_ {
        self.integral_terms
            .terms()
            .filter(|(m, _)| !m.is_constant())
            .map(|(m, _)| AccumulatorKey { moment: m.clone(), lambda: self.id.lambda })
    }

    /// Realises `Z` from the terminal state and a lookup of the running
    /// integrals; the constant monomial is integrated in closed form.
    pub fn realize<F>(&self, terminal: &[i64], mut integral: F) -> Option<f64>
    where
        F: FnMut(&AccumulatorKey) -> Option<f64>,
    {
        let mut z = self.terminal_coefficient * self.id.moment.eval(terminal) - self.initial_value;
        for (m, c) in self.integral_terms.terms() {
            let value = if m.is_constant() {
                weight_integral(self.id.lambda, self.horizon)
            } else {
                integral(&AccumulatorKey { moment: m.clone(), lambda: self.id.lambda })?
            };
            z -= c * value;
        }
        Some(z)
    }
}

impl fmt::Display for ConstraintExpansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "constraint {} horizon={}", self.id, self.horizon)?;
        writeln!(
            f,
            "  terminal  e^(lambda T) * x^{} = {:e} * x^{}",
            self.id.moment, self.terminal_coefficient, self.id.moment
        )?;
        writeln!(f, "  initial   x0^m = {}", self.initial_value)?;
        writeln!(f, "  integral  monomial -> coefficient")?;
        for (m, c) in self.integral_terms.terms() {
            writeln!(f, "    {m:<12} {c:+.6e}")?;
        }
        Ok(())
    }
}

pub fn constraint_expansion(
    model: &Model,
    id: &ControlVariateId,
    horizon: f64,
) -> Result<ConstraintExpansion, PolynomialityError> {
    let lambda = normalize_lambda(id.lambda);
    let mut integral_terms = moment_drift(model, &id.moment)?;
    integral_terms.add_term(id.moment.clone(), lambda);
    Ok(ConstraintExpansion {
        id: ControlVariateId { moment: id.moment.clone(), lambda },
        horizon,
        terminal_coefficient: (lambda * horizon).exp(),
        initial_value: id.moment.eval(model.initial_state()),
        integral_terms,
    })
}

/// Deduplicated running-integral keys across all expansions.
pub fn accumulator_keys(expansions: &[ConstraintExpansion]) -> BTreeSet<AccumulatorKey> {
    expansions.iter().flat_map(ConstraintExpansion::keys).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srn::Reaction;

    fn birth_death(gamma: f64, delta: f64) -> Model {
        Model::new(
            vec!["A".into()],
            vec![],
            vec![Reaction::mass_action(vec![0], vec![1], gamma), Reaction::mass_action(vec![1], vec![0], delta)],
            vec![0],
        )
        .unwrap()
    }

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
    fn birth_death_mean_drift() {
        let d = moment_drift(&birth_death(10.0, 1.0), &MultiIndex(vec![1])).unwrap();
        assert_eq!(d.coefficient(&MultiIndex(vec![0])), 10.0);
        assert_eq!(d.coefficient(&MultiIndex(vec![1])), -1.0);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn dimerization_mean_drift() {
        // 10 + 0.1 x - 0.1 x^2: births add 10, dimerisation removes 2 * 0.05 x (x - 1)
        let d = moment_drift(&dimerization(), &MultiIndex(vec![1, 0])).unwrap();
        assert!((d.coefficient(&MultiIndex(vec![0, 0])) - 10.0).abs() < 1e-14);
        assert!((d.coefficient(&MultiIndex(vec![1, 0])) - 0.1).abs() < 1e-14);
        assert!((d.coefficient(&MultiIndex(vec![2, 0])) + 0.1).abs() < 1e-14);
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn zero_moment_has_no_drift() {
        assert!(moment_drift(&dimerization(), &MultiIndex(vec![0, 0])).unwrap().is_zero());
    }

    #[test]
    fn exact_birth_death_constraint_is_linear_in_terminal_count() {
        let model = birth_death(10.0, 1.0);
        let e = constraint_expansion(&model, &ControlVariateId::new(MultiIndex(vec![1]), 1.0), 2.0).unwrap();
        // lambda x + (gamma - delta x) leaves only the constant gamma
        assert_eq!(e.integral_terms, Polynomial::constant(1, 10.0));
        assert_eq!(accumulator_keys(std::slice::from_ref(&e)).len(), 0);
        // E[Z] = 0 gives E[X_T] = gamma/delta (1 - e^-T)
        let z_at = |x: i64| e.realize(&[x], |_| None).unwrap();
        let mean = 10.0 * (1.0 - (-2.0f64).exp());
        let slope = z_at(1) - z_at(0);
        assert!((z_at(0) + slope * mean).abs() < 1e-12);
    }

    #[test]
    fn birth_death_lambda_zero_constraint() {
        let model = birth_death(10.0, 1.0);
        let e = constraint_expansion(&model, &ControlVariateId::new(MultiIndex(vec![1]), 0.0), 2.0).unwrap();
        assert_eq!(e.terminal_coefficient, 1.0);
        assert_eq!(e.integral_terms.coefficient(&MultiIndex(vec![0])), 10.0);
        assert_eq!(e.integral_terms.coefficient(&MultiIndex(vec![1])), -1.0);
        // one birth at t = 1 on [0, 2]: int X dt = 1
        let z = e.realize(&[1], |_| Some(1.0)).unwrap();
        assert_eq!(z, -18.0);
    }

    #[test]
    fn no_reaction_model_telescopes_to_zero() {
        let model = Model::new(vec!["A".into()], vec![], vec![], vec![3]).unwrap();
        for &lambda in &[0.0, 1.0, -0.7, 2.5] {
            for k in 1..=3u32 {
                let e = constraint_expansion(&model, &ControlVariateId::new(MultiIndex(vec![k]), lambda), 1.5).unwrap();
                let x_m = 3f64.powi(k as i32);
                let z = e.realize(&[3], |_| Some(x_m * weight_integral(lambda, 1.5))).unwrap();
                assert!(z.abs() < 1e-12 * x_m * e.terminal_coefficient, "lambda={lambda} k={k} z={z}");
            }
        }
    }

    #[test]
    fn dimerization_keys() {
        let model = dimerization();
        let e = constraint_expansion(&model, &ControlVariateId::new(MultiIndex(vec![1, 0]), 2.5), 2.0).unwrap();
        let keys: Vec<_> = accumulator_keys(&[e]).into_iter().collect();
        assert_eq!(
            keys,
            vec![
                AccumulatorKey { moment: MultiIndex(vec![1, 0]), lambda: 2.5 },
                AccumulatorKey { moment: MultiIndex(vec![2, 0]), lambda: 2.5 },
            ]
        );
        assert!(accumulator_keys(&[]).is_empty());
    }

    #[test]
    fn shared_keys_are_merged() {
        let model = dimerization();
        let a = constraint_expansion(&model, &ControlVariateId::new(MultiIndex(vec![1, 0]), 0.5), 2.0).unwrap();
        let b = constraint_expansion(&model, &ControlVariateId::new(MultiIndex(vec![2, 0]), 0.5), 2.0).unwrap();
        let keys = accumulator_keys(&[a.clone(), b.clone()]);
        let total = a.keys().count() + b.keys().count();
        assert!(keys.len() < total);
        for k in a.keys().chain(b.keys()) {
            assert!(keys.contains(&k));
        }
    }

    #[test]
    fn tiny_lambda_is_zero() {
        let id = ControlVariateId::new(MultiIndex(vec![1]), 1e-13);
        assert_eq!(id.lambda, 0.0);
        assert_eq!(weight_integral(0.0, 2.0), 2.0);
        assert!((weight_integral(1.0, 1.0) - (std::f64::consts::E - 1.0)).abs() < 1e-15);
    }
}
