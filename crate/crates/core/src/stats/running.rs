use serde::{Deserialize, Serialize};

use crate::error::StatsError;

/// Single-pass mean and comoments of the vector `(Z_1, ..., Z_d, V)`.
///
/// Updates follow Welford; two disjoint streams combine with Chan's
/// pairwise formula, so block results can be reduced in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    d: usize,
    n: u64,
    mean: Vec<f64>,
    // row-major (d+1)^2, only the upper triangle is maintained
    m2: Vec<f64>,
    #[serde(skip)]
    scratch: Vec<f64>,
}

impl RunningStats {
    pub fn new(d: usize) -> Self {
        let k = d + 1;
        RunningStats { d, n: 0, mean: vec![0.0; k], m2: vec![0.0; k * k], scratch: vec![0.0; k] }
    }

    /// Number of control variates.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, v: f64, z: &[f64]) -> Result<(), StatsError> {
        if z.len() != self.d {
            return Err(StatsError::DimensionMismatch { expected: self.d, got: z.len() });
        }
        let k = self.d + 1;
        if self.scratch.len() != k {
            self.scratch = vec![0.0; k];
        }
        self.n += 1;
        let n = self.n as f64;
        for i in 0..k {
            let x = if i < self.d { z[i] } else { v };
            let delta = x - self.mean[i];
            self.scratch[i] = delta;
            self.mean[i] += delta / n;
        }
        // delta_i * (x_j - new_mean_j) = delta_i * delta_j * (n-1)/n
        let f = (n - 1.0) / n;
        for i in 0..k {
            let di = self.scratch[i] * f;
            if di == 0.0 {
                continue;
            }
            let row = &mut self.m2[i * k..(i + 1) * k];
            for j in i..k {
                row[j] += di * self.scratch[j];
            }
        }
        Ok(())
    }

    /// Combines with statistics of a disjoint sample.
    pub fn merge(&mut self, other: &RunningStats) -> Result<(), StatsError> {
        if other.d != self.d {
            return Err(StatsError::DimensionMismatch { expected: self.d, got: other.d });
        }
        if other.n == 0 {
            return Ok(());
        }
        if self.n == 0 {
            self.n = other.n;
            self.mean.clone_from(&other.mean);
            self.m2.clone_from(&other.m2);
            return Ok(());
        }
        let k = self.d + 1;
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let w = na * nb / n;
        for i in 0..k {
            for j in i..k {
                self.m2[i * k + j] += other.m2[i * k + j] + delta[i] * delta[j] * w;
            }
            self.mean[i] += delta[i] * nb / n;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn mean_v(&self) -> f64 {
        self.mean[self.d]
    }

    pub fn mean_z(&self) -> &[f64] {
        &self.mean[..self.d]
    }

    fn require(&self, needed: u64) -> Result<(), StatsError> {
        if self.n < needed {
            Err(StatsError::TooFewSamples { needed, have: self.n })
        } else {
            Ok(())
        }
    }

    /// Unbiased covariance entry, indices into `(Z_1, ..., Z_d, V)`.
    pub fn cov(&self, i: usize, j: usize) -> Result<f64, StatsError> {
        self.require(2)?;
        let k = self.d + 1;
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        Ok(self.m2[a * k + b] / (self.n as f64 - 1.0))
    }

    pub fn var_v(&self) -> Result<f64, StatsError> {
        self.cov(self.d, self.d)
    }

    /// Full symmetric `(d+1) x (d+1)` sample covariance, `V` in the last row.
    pub fn covariance(&self) -> Result<Vec<Vec<f64>>, StatsError> {
        self.require(2)?;
        let k = self.d + 1;
        let scale = 1.0 / (self.n as f64 - 1.0);
        let mut c = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in i..k {
                let v = self.m2[i * k + j] * scale;
                c[i][j] = v;
                c[j][i] = v;
            }
        }
        Ok(c)
    }

    /// Correlation matrix; entries involving a zero-variance coordinate are 0
    /// off the diagonal.
    pub fn correlation(&self) -> Result<Vec<Vec<f64>>, StatsError> {
        let c = self.covariance()?;
        let k = c.len();
        let s: Vec<f64> = (0..k).map(|i| c[i][i].max(0.0).sqrt()).collect();
        let mut r = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                r[i][j] = if i == j {
                    1.0
                } else if s[i] > 0.0 && s[j] > 0.0 {
                    (c[i][j] / (s[i] * s[j])).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(r)
    }

    /// Correlation of `Z_i` with `V`.
    pub fn correlation_with_v(&self, i: usize) -> Result<f64, StatsError> {
        let (czv, cz, cv) = (self.cov(i, self.d)?, self.cov(i, i)?, self.cov(self.d, self.d)?);
        if cz > 0.0 && cv > 0.0 {
            Ok((czv / (cz * cv).sqrt()).clamp(-1.0, 1.0))
        } else {
            Ok(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points() {
        let mut s = RunningStats::new(1);
        s.push(1.0, &[0.0]).unwrap();
        assert!(matches!(s.covariance(), Err(StatsError::TooFewSamples { needed: 2, have: 1 })));
        s.push(3.0, &[0.0]).unwrap();
        assert_eq!(s.mean_v(), 2.0);
        assert_eq!(s.var_v().unwrap(), 2.0);
        assert_eq!(s.cov(0, 0).unwrap(), 0.0);
        assert_eq!(s.cov(0, 1).unwrap(), 0.0);
    }

    #[test]
    fn dimension_checked() {
        let mut s = RunningStats::new(2);
        assert_eq!(s.push(1.0, &[0.0]), Err(StatsError::DimensionMismatch { expected: 2, got: 1 }));
        assert!(s.merge(&RunningStats::new(1)).is_err());
    }

    #[test]
    fn merge_matches_stream() {
        let data: Vec<(f64, [f64; 2])> = (0..50)
            .map(|i| {
                let x = i as f64;
                ((x * 0.7).sin() * 10.0, [x, (x * 1.3).cos()])
            })
            .collect();
        let mut all = RunningStats::new(2);
        let mut a = RunningStats::new(2);
        let mut b = RunningStats::new(2);
        for (i, (v, z)) in data.iter().enumerate() {
            all.push(*v, z).unwrap();
            if i < 17 { a.push(*v, z) } else { b.push(*v, z) }.unwrap();
        }
        a.merge(&b).unwrap();
        let (ca, cb) = (all.covariance().unwrap(), a.covariance().unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert!((ca[i][j] - cb[i][j]).abs() <= 1e-12 * ca[i][j].abs().max(1.0));
            }
        }
    }
}
