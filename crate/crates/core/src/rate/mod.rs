//! Rate expressions, their stack-machine compilation, and polynomial lowering.

mod expr;
mod program;

pub use expr::RateExpr;
pub use program::{Instr, StackProgram};

use crate::error::PolynomialityError;
use crate::moment::Polynomial;

/// Lowers `expr` into a polynomial in the species counts with parameters
/// substituted. Division is only accepted by species-free divisors.
pub fn to_polynomial(expr: &RateExpr, params: &[f64], n_species: usize) -> Result<Polynomial, PolynomialityError> {
    let fail = |reason: &str| PolynomialityError { reason: reason.to_string() };
    Ok(match expr {
        RateExpr::Const(c) => Polynomial::constant(n_species, *c),
        RateExpr::Param(i) => {
            let v = params.get(*i).ok_or_else(|| fail("unresolved parameter reference"))?;
            Polynomial::constant(n_species, *v)
        }
        RateExpr::Species(i) => {
            if *i >= n_species {
                return Err(fail("unresolved species reference"));
            }
            Polynomial::variable(n_species, *i)
        }
        RateExpr::Neg(a) => to_polynomial(a, params, n_species)?.scale(-1.0),
        RateExpr::Add(a, b) => &to_polynomial(a, params, n_species)? + &to_polynomial(b, params, n_species)?,
        RateExpr::Sub(a, b) => &to_polynomial(a, params, n_species)? - &to_polynomial(b, params, n_species)?,
        RateExpr::Mul(a, b) => &to_polynomial(a, params, n_species)? * &to_polynomial(b, params, n_species)?,
        RateExpr::Div(a, b) => {
            let den = to_polynomial(b, params, n_species)?;
            match den.as_constant() {
                Some(c) if c != 0.0 => to_polynomial(a, params, n_species)?.scale(1.0 / c),
                Some(_) => return Err(fail("division by a zero constant")),
                None => return Err(fail("division by a species-dependent term")),
            }
        }
        RateExpr::Pow(a, k) => {
            let base = to_polynomial(a, params, n_species)?;
            if *k >= 0 {
                base.powi(*k as u32)
            } else {
                match base.as_constant() {
                    Some(c) if c != 0.0 => Polynomial::constant(n_species, c.powi(*k)),
                    _ => return Err(fail("negative power of a species-dependent term")),
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment::MultiIndex;

    #[test]
    fn dimerization_mass_action_polynomial() {
        let e = RateExpr::mass_action(RateExpr::Const(0.1), &[2, 0]);
        let p = to_polynomial(&e, &[], 2).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p.coefficient(&MultiIndex(vec![2, 0])) - 0.05).abs() < 1e-15);
        assert!((p.coefficient(&MultiIndex(vec![1, 0])) + 0.05).abs() < 1e-15);
    }

    #[test]
    fn constant_birth() {
        let e = RateExpr::mass_action(RateExpr::Param(0), &[0]);
        let p = to_polynomial(&e, &[10.0], 1).unwrap();
        assert_eq!(p, Polynomial::constant(1, 10.0));
    }

    #[test]
    fn hill_type_rate_is_rejected() {
        let e = RateExpr::div(RateExpr::Const(1.0), RateExpr::add(RateExpr::Const(1.0), RateExpr::Species(0)));
        assert!(to_polynomial(&e, &[], 1).is_err());
    }

    #[test]
    fn division_by_parameter_is_fine() {
        let e = RateExpr::div(RateExpr::Species(0), RateExpr::Param(0));
        let p = to_polynomial(&e, &[4.0], 1).unwrap();
        assert_eq!(p.coefficient(&MultiIndex(vec![1])), 0.25);
    }
}
