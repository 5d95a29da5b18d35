use std::fmt;

use crate::error::EvalError;

/// Arithmetic over constants, parameters and species counts.
#[derive(Debug, Clone, PartialEq)]
pub enum RateExpr {
    Const(f64),
    Param(usize),
    Species(usize),
    Neg(Box<RateExpr>),
    Add(Box<RateExpr>, Box<RateExpr>),
    Sub(Box<RateExpr>, Box<RateExpr>),
    Mul(Box<RateExpr>, Box<RateExpr>),
    Div(Box<RateExpr>, Box<RateExpr>),
    Pow(Box<RateExpr>, i32),
}

#[allow(clippy::should_implement_trait)]
impl RateExpr {
    pub fn add(a: RateExpr, b: RateExpr) -> Self {
        RateExpr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: RateExpr, b: RateExpr) -> Self {
        RateExpr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: RateExpr, b: RateExpr) -> Self {
        RateExpr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: RateExpr, b: RateExpr) -> Self {
        RateExpr::Div(Box::new(a), Box::new(b))
    }

    pub fn pow(a: RateExpr, k: i32) -> Self {
        RateExpr::Pow(Box::new(a), k)
    }

    pub fn neg(a: RateExpr) -> Self {
        RateExpr::Neg(Box::new(a))
    }

    /// Expands `c * prod_i binom(x_i, v_i)` into falling factorials:
    /// `c * x (x - 1) ... / v!`.
    pub fn mass_action(constant: RateExpr, reactants: &[u32]) -> Self {
        let mut expr = constant;
        let mut denom = 1.0f64;
        for (species, &v) in reactants.iter().enumerate() {
            for k in 0..v {
                let factor = if k == 0 {
                    RateExpr::Species(species)
                } else {
                    RateExpr::sub(RateExpr::Species(species), RateExpr::Const(f64::from(k)))
                };
                expr = RateExpr::mul(expr, factor);
                denom *= f64::from(k + 1);
            }
        }
        if denom > 1.0 {
            expr = RateExpr::div(expr, RateExpr::Const(denom));
        }
        expr
    }

    /// Reference tree-walk evaluation.
    pub fn eval(&self, state: &[i64], params: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            RateExpr::Const(c) => *c,
            RateExpr::Param(i) => *params.get(*i).ok_or(EvalError::UnknownParameter(*i))?,
            RateExpr::Species(i) => *state.get(*i).ok_or(EvalError::UnknownSpecies(*i))? as f64,
            RateExpr::Neg(a) => -a.eval(state, params)?,
            RateExpr::Add(a, b) => a.eval(state, params)? + b.eval(state, params)?,
            RateExpr::Sub(a, b) => a.eval(state, params)? - b.eval(state, params)?,
            RateExpr::Mul(a, b) => a.eval(state, params)? * b.eval(state, params)?,
            RateExpr::Div(a, b) => {
                let num = a.eval(state, params)?;
                let den = b.eval(state, params)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                num / den
            }
            RateExpr::Pow(a, k) => {
                let base = a.eval(state, params)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                base.powi(*k)
            }
        })
    }

    pub fn depends_on_species(&self) -> bool {
        match self {
            RateExpr::Const(_) | RateExpr::Param(_) => false,
            RateExpr::Species(_) => true,
            RateExpr::Neg(a) | RateExpr::Pow(a, _) => a.depends_on_species(),
            RateExpr::Add(a, b) | RateExpr::Sub(a, b) | RateExpr::Mul(a, b) | RateExpr::Div(a, b) => {
                a.depends_on_species() || b.depends_on_species()
            }
        }
    }

    /// Checks every reference against the given species and parameter counts.
    pub fn check_references(&self, n_species: usize, n_params: usize) -> Result<(), EvalError> {
        match self {
            RateExpr::Const(_) => Ok(()),
            RateExpr::Param(i) if *i >= n_params => Err(EvalError::UnknownParameter(*i)),
            RateExpr::Species(i) if *i >= n_species => Err(EvalError::UnknownSpecies(*i)),
            RateExpr::Param(_) | RateExpr::Species(_) => Ok(()),
            RateExpr::Neg(a) | RateExpr::Pow(a, _) => a.check_references(n_species, n_params),
            RateExpr::Add(a, b) | RateExpr::Sub(a, b) | RateExpr::Mul(a, b) | RateExpr::Div(a, b) => {
                a.check_references(n_species, n_params)?;
                b.check_references(n_species, n_params)
            }
        }
    }

    /// Renders the expression with names, fully parenthesised so that
    /// re-parsing reproduces the same tree.
    pub fn display<'a>(&'a self, species: &'a [String], params: &'a [String]) -> impl fmt::Display + 'a {
        Named { expr: self, species, params }
    }
}

struct Named<'a> {
    expr: &'a RateExpr,
    species: &'a [String],
    params: &'a [String],
}

impl Named<'_> {
    fn child<'b>(&'b self, expr: &'b RateExpr) -> Named<'b> {
        Named { expr, species: self.species, params: self.params }
    }
}

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            RateExpr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            RateExpr::Param(i) => match self.params.get(*i) {
                Some(name) => f.write_str(name),
                None => write!(f, "<param#{i}>"),
            },
            RateExpr::Species(i) => match self.species.get(*i) {
                Some(name) => f.write_str(name),
                None => write!(f, "<species#{i}>"),
            },
            // `-<literal>` re-parses as a negative constant, so keep the child wrapped.
            RateExpr::Neg(a) if matches!(**a, RateExpr::Const(_)) => write!(f, "(-({}))", self.child(a)),
            RateExpr::Neg(a) => write!(f, "(-{})", self.child(a)),
            RateExpr::Add(a, b) => write!(f, "({} + {})", self.child(a), self.child(b)),
            RateExpr::Sub(a, b) => write!(f, "({} - {})", self.child(a), self.child(b)),
            RateExpr::Mul(a, b) => write!(f, "({} * {})", self.child(a), self.child(b)),
            RateExpr::Div(a, b) => write!(f, "({} / {})", self.child(a), self.child(b)),
            RateExpr::Pow(a, k) => write!(f, "({}^{k})", self.child(a)),
        }
    }
}
