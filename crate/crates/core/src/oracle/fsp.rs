use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::moment::{MultiIndex, Polynomial};
use crate::srn::Model;

pub const MAX_STATES: usize = 1_000_000;
pub const MAX_SPECIES: usize = 3;
/// Local error tolerance of the integrator, absolute and relative.
pub const STEP_TOLERANCE: f64 = 1e-8;

/// Per-species upper bounds of the truncated state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationBox {
    pub upper: Vec<i64>,
    /// Largest acceptable probability mass leaving the box by the horizon.
    pub tolerance: f64,
}

impl TruncationBox {
    pub fn new(upper: Vec<i64>) -> Self {
        TruncationBox { upper, tolerance: 1e-6 }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    fn contains(&self, x: &[i64]) -> bool {
        x.iter().zip(&self.upper).all(|(&v, &u)| v >= 0 && v <= u)
    }
}

/// The truncated forward equation on the states reachable from the initial
/// state without leaving the box. Transitions out of the box feed a sink.
#[derive(Debug, Clone)]
pub struct FspSystem {
    states: Vec<Vec<i64>>,
    // (from, to, rate), sorted by source
    edges: Vec<(u32, u32, f64)>,
    exit: Vec<f64>,
    outflow: Vec<f64>,
    initial: usize,
}

impl FspSystem {
    pub fn build(model: &Model, window: &TruncationBox) -> Result<Self, OracleError> {
        let n = model.n_species();
        if n > MAX_SPECIES {
            return Err(OracleError::OutOfScope(format!("{n} species, at most {MAX_SPECIES} supported")));
        }
        if window.upper.len() != n {
            return Err(OracleError::BoxLength { expected: n, got: window.upper.len() });
        }
        let x0 = model.initial_state().to_vec();
        if !window.contains(&x0) {
            return Err(OracleError::InitialOutsideBox);
        }
        let changes: Vec<Vec<i64>> = model.reactions().iter().map(|r| r.change()).collect();
        let mut index: HashMap<Vec<i64>, u32> = HashMap::new();
        let mut states = vec![x0.clone()];
        index.insert(x0, 0);
        let mut queue = VecDeque::from([0usize]);
        let mut edges = Vec::new();
        let mut exit = Vec::new();
        let mut outflow = Vec::new();
        while let Some(i) = queue.pop_front() {
            let x = states[i].clone();
            let (mut total, mut lost) = (0.0, 0.0);
            for (j, v) in changes.iter().enumerate() {
                let a = model.propensity(j, &x)?;
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(OracleError::OutOfScope(format!("reaction {j} has propensity {a} at {x:?}")));
                }
                if a == 0.0 {
                    continue;
                }
                total += a;
                let y: Vec<i64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
                if !window.contains(&y) {
                    lost += a;
                    continue;
                }
                let target = match index.get(&y) {
                    Some(&k) => k,
                    None => {
                        if states.len() >= MAX_STATES {
                            return Err(OracleError::TooManyStates { limit: MAX_STATES });
                        }
                        let k = states.len() as u32;
                        index.insert(y.clone(), k);
                        states.push(y);
                        queue.push_back(k as usize);
                        k
                    }
                };
                edges.push((i as u32, target, a));
            }
            exit.push(total);
            outflow.push(lost);
        }
        // BFS pops states in index order, so edges are already grouped by source
        Ok(FspSystem { states, edges, exit, outflow, initial: 0 })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<i64>] {
        &self.states
    }

    pub fn dirac(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        p[self.initial] = 1.0;
        p
    }

    /// `dp = A p` and the rate of mass loss.
    fn rhs(&self, p: &[f64], dp: &mut [f64]) -> f64 {
        for ((d, &e), &pi) in dp.iter_mut().zip(&self.exit).zip(p) {
            *d = -e * pi;
        }
        for &(from, to, a) in &self.edges {
            dp[to as usize] += a * p[from as usize];
        }
        self.outflow.iter().zip(p).map(|(o, pi)| o * pi).sum()
    }

    /// Integrates `p` (and the lost mass) forward by `dt` with adaptive
    /// Dormand-Prince 5(4) steps.
    pub fn advance(&self, p: &mut Vec<f64>, lost: &mut f64, t0: f64, dt: f64) -> Result<(), OracleError> {
        if dt <= 0.0 || self.edges.is_empty() && self.outflow.iter().all(|&o| o == 0.0) {
            return Ok(());
        }
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const E: [f64; 7] =
            [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
        let m = self.len();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 7];
        let mut kl = [0.0f64; 7];
        let mut y = vec![0.0; m];
        let mut t = 0.0;
        let max_rate = self.exit.iter().cloned().fold(0.0, f64::max);
        let mut h = if max_rate > 0.0 { (1.0 / max_rate).min(dt) } else { dt };
        kl[0] = self.rhs(p, &mut k[0]);
        while dt - t > 1e-13 * dt {
            if t + h > dt {
                h = dt - t;
            }
            for s in 1..7 {
                for i in 0..m {
                    let mut acc = p[i];
                    for r in 0..s {
                        if A[s][r] != 0.0 {
                            acc += h * A[s][r] * k[r][i];
                        }
                    }
                    y[i] = acc;
                }
                kl[s] = self.rhs(&y, &mut k[s]);
            }
            // y now holds the 5th-order solution (stage 7 uses the B weights)
            let mut err = 0.0f64;
            for i in 0..m {
                let e: f64 = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
                let scale = STEP_TOLERANCE + STEP_TOLERANCE * p[i].abs().max(y[i].abs());
                err = err.max((e / scale).abs());
            }
            if err <= 1.0 {
                let lost_step: f64 = h * (0..6).map(|s| A[6][s] * kl[s]).sum::<f64>();
                *lost += lost_step;
                std::mem::swap(p, &mut y);
                t += h;
                // first-same-as-last
                k.swap(0, 6);
                kl[0] = kl[6];
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
            if h < 1e-14 * (t0 + dt).abs().max(1.0) {
                return Err(OracleError::StepUnderflow(t0 + t));
            }
        }
        Ok(())
    }
}

/// Truncated transient distribution at a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FspSolution {
    pub horizon: f64,
    pub states: Vec<Vec<i64>>,
    pub probabilities: Vec<f64>,
    pub lost_mass: f64,
}

impl FspSolution {
    /// `sum_x f(x) pi(x)` over the window, negative round-off clipped.
    pub fn expectation<F: Fn(&[i64]) -> f64>(&self, f: F) -> f64 {
        self.states.iter().zip(&self.probabilities).map(|(x, &p)| f(x) * p.max(0.0)).sum()
    }

    pub fn moment(&self, m: &MultiIndex) -> f64 {
        self.expectation(|x| m.eval(x))
    }

    pub fn polynomial_expectation(&self, poly: &Polynomial) -> f64 {
        self.expectation(|x| poly.eval(x))
    }

    pub fn mean(&self, species: usize) -> f64 {
        self.expectation(|x| x[species] as f64)
    }

    pub fn probability_le(&self, species: usize, level: i64) -> f64 {
        self.expectation(|x| if x[species] <= level { 1.0 } else { 0.0 })
    }

    pub fn tracked_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Solves the truncated master equation from the initial Dirac measure.
pub fn fsp_transient(model: &Model, window: &TruncationBox, horizon: f64) -> Result<FspSolution, OracleError> {
    let system = FspSystem::build(model, window)?;
    let mut p = system.dirac();
    let mut lost = 0.0;
    system.advance(&mut p, &mut lost, 0.0, horizon)?;
    if lost > window.tolerance {
        return Err(OracleError::WindowTooSmall { lost, tolerance: window.tolerance });
    }
    Ok(FspSolution { horizon, states: system.states.clone(), probabilities: p, lost_mass: lost })
}
