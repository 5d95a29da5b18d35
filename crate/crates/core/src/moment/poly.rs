use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Exponent vector `m` of a monomial `x^m`, one entry per species.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n_species: usize) -> Self {
        MultiIndex(vec![0; n_species])
    }

    pub fn unit(n_species: usize, species: usize) -> Self {
        let mut m = vec![0; n_species];
        m[species] = 1;
        MultiIndex(m)
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// `x^m` at an integer state.
    pub fn eval(&self, x: &[i64]) -> f64 {
        self.0.iter().zip(x).filter(|(&e, _)| e > 0).map(|(&e, &xi)| (xi as f64).powi(e as i32)).product()
    }

    /// Every multi-index with `1 <= |m| <= max_order`, ordered by degree then
    /// reverse-lexicographically, so order-1 indices follow species order.
    pub fn enumerate(n_species: usize, max_order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for order in 1..=max_order {
            let mut current = vec![0u32; n_species];
            compositions(order, 0, &mut current, &mut out);
        }
        out
    }
}

fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.clone()));
        current[pos] = 0;
        return;
    }
    if current.is_empty() {
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str(")")
    }
}

/// Multivariate polynomial in the species counts, in canonical form: no
/// zero coefficients, one entry per monomial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    n_vars: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(n_vars: usize) -> Self {
        Polynomial { n_vars, terms: BTreeMap::new() }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n_vars);
        p.add_term(MultiIndex::zero(n_vars), c);
        p
    }

    pub fn monomial(m: MultiIndex, c: f64) -> Self {
        let mut p = Polynomial::zero(m.len());
        p.add_term(m, c);
        p
    }

    pub fn variable(n_vars: usize, i: usize) -> Self {
        Polynomial::monomial(MultiIndex::unit(n_vars, i), 1.0)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Constant term, if the polynomial is species-free.
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.iter().next().filter(|(m, _)| m.is_constant()).map(|(_, &c)| c),
            _ => None,
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::order).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: MultiIndex, c: f64) {
        debug_assert_eq!(m.len(), self.n_vars);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = *o.get() + c;
                if sum == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.n_vars);
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    pub fn powi(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.n_vars, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn eval(&self, x: &[i64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// `q(x) = p(x + v)`, by binomial expansion of each shifted coordinate.
    pub fn shift(&self, v: &[i64]) -> Polynomial {
        assert_eq!(v.len(), self.n_vars, "shift vector length");
        if v.iter().all(|&vi| vi == 0) {
            return self.clone();
        }
        let mut out = Polynomial::zero(self.n_vars);
        for (m, c) in self.terms() {
            let mut acc = Polynomial::constant(self.n_vars, c);
            for (i, (&e, &vi)) in m.0.iter().zip(v).enumerate() {
                if e == 0 {
                    continue;
                }
                let mut factor = Polynomial::zero(self.n_vars);
                let mut binom = 1.0f64;
                for k in 0..=e {
                    // binom(e, k) * vi^(e-k) * x_i^k
                    let mut mk = MultiIndex::zero(self.n_vars);
                    mk.0[i] = k;
                    factor.add_term(mk, binom * (vi as f64).powi((e - k) as i32));
                    binom = binom * f64::from(e - k) / f64::from(k + 1);
                }
                acc = &acc * &factor;
            }
            out = &out + &acc;
        }
        out
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;

    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in rhs.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;

    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in rhs.terms() {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;

    // exponents add when monomials multiply
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let n = self.n_vars.max(rhs.n_vars);
        let mut out = Polynomial::zero(n);
        for (a, ca) in self.terms() {
            for (b, cb) in rhs.terms() {
                let m = MultiIndex(a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect());
                out.add_term(m, ca * cb);
            }
        }
        out
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{c}*x^{m}")?;
        }
        Ok(())
    }
}
