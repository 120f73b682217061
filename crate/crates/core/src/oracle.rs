//! Brute-force reference implementations for tests and `verify`.
//!
//! Nothing here calls the projective, markov or pushforward code: eigendata
//! come from a dense eigensolver and cylinders from direct sums. Potentials
//! are read only through their raw tables.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potentials::LocallyConstantPotential;
use crate::symbolic::{checked_count, decode_word, word_code, AmalgamationMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub max_word_length: usize,
    pub max_period: usize,
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_word_length: 12,
            max_period: 14,
            tolerance: 1e-10,
        }
    }
}

/// Leading eigenvalue and eigenvectors of a nonnegative primitive matrix,
/// with `L . R = 1`, `|R|_1 = 1`.
#[derive(Clone, Debug)]
pub struct OracleEigen {
    pub rho: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

fn null_vector(a: &DMatrix<f64>) -> Vec<f64> {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    let v: Vec<f64> = v_t.row(idx).iter().copied().collect();
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    v.into_iter().map(|x| x * sign).collect()
}

/// Perron data by a dense eigensolver: `rho` is the eigenvalue of largest
/// modulus, the vectors span the null spaces of `M - rho I` and its transpose.
pub fn oracle_eigen(rows: &[Vec<f64>]) -> Result<OracleEigen> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("oracle needs a square matrix".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let rho = m
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    let shifted = &m - DMatrix::identity(n, n) * rho;
    let mut right = null_vector(&shifted);
    let mut left = null_vector(&shifted.transpose());
    let total: f64 = right.iter().sum();
    right.iter_mut().for_each(|x| *x /= total);
    let dot: f64 = left.iter().zip(&right).map(|(a, b)| a * b).sum();
    left.iter_mut().for_each(|x| *x /= dot);
    Ok(OracleEigen { rho, right, left })
}

/// The transfer matrix written out from the raw table.
pub fn oracle_transfer_rows(pot: &LocallyConstantPotential) -> Vec<Vec<f64>> {
    let k = pot.alphabet().size();
    let r = pot.range();
    let dim = k.pow(r as u32);
    let table = pot.table();
    let mut rows = vec![vec![0.0; dim]; dim];
    for (code, &value) in table.iter().enumerate() {
        // (r+1)-word code -> first r letters (row) and last r letters (column)
        rows[code / k][code % dim] = value.exp();
    }
    rows
}

/// Exact cylinder probabilities of the Gibbs measure from the oracle eigendata.
#[derive(Clone, Debug)]
pub struct OracleMeasure {
    k: usize,
    r: usize,
    table: Vec<f64>,
    eigen: OracleEigen,
}

impl OracleMeasure {
    pub fn new(pot: &LocallyConstantPotential) -> Result<Self> {
        Ok(Self {
            k: pot.alphabet().size(),
            r: pot.range(),
            table: pot.table().to_vec(),
            eigen: oracle_eigen(&oracle_transfer_rows(pot))?,
        })
    }

    pub fn eigen(&self) -> &OracleEigen {
        &self.eigen
    }

    /// `mu[w]` as a plain probability.
    pub fn cylinder(&self, w: &[u8]) -> f64 {
        let (k, r) = (self.k, self.r);
        let m = w.len();
        if m < r {
            let block = k.pow((r - m) as u32);
            let start = word_code(w, k) * block;
            return (start..start + block)
                .map(|u| self.eigen.left[u] * self.eigen.right[u])
                .sum();
        }
        let mut p = self.eigen.left[word_code(&w[..r], k)];
        for j in 0..m - r {
            p *= self.table[word_code(&w[j..=j + r], k)].exp() / self.eigen.rho;
        }
        p * self.eigen.right[word_code(&w[m - r..], k)]
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// `log P_r^(p)[w]` by enumerating all `Card(A)^p` periodic points.
pub fn oracle_cylinder(
    pot: &LocallyConstantPotential,
    w: &[u8],
    p: usize,
    config: &OracleConfig,
) -> Result<f64> {
    let (k, r) = (pot.alphabet().size(), pot.range());
    if p <= w.len() + r {
        return Err(Error::InvalidArgument(format!(
            "period {p} must exceed |w| + r = {}",
            w.len() + r
        )));
    }
    if p > config.max_period {
        return Err(Error::EnumerationTooLarge {
            requested: p as u128,
            cap: config.max_period as u64,
        });
    }
    let count = checked_count(k, p, u64::MAX)?;
    let table = pot.table();
    let sums: Vec<(bool, f64)> = (0..count)
        .into_par_iter()
        .map(|code| {
            let mut x = vec![0u8; p];
            decode_word(code, k, &mut x);
            let s: f64 = (0..p)
                .map(|j| {
                    let window: Vec<u8> = (0..=r).map(|i| x[(j + i) % p]).collect();
                    table[word_code(&window, k)]
                })
                .sum();
            (x[..w.len()] == *w, s)
        })
        .collect();
    let all: Vec<f64> = sums.iter().map(|s| s.1).collect();
    let hit: Vec<f64> = sums.iter().filter(|s| s.0).map(|s| s.1).collect();
    Ok(log_sum_exp(&hit) - log_sum_exp(&all))
}

/// `nu_r[b]` as the plain sum of exact cylinder probabilities over the fiber.
pub fn oracle_pushforward(
    measure: &OracleMeasure,
    map: &AmalgamationMap,
    b: &[u8],
    config: &OracleConfig,
) -> Result<f64> {
    if b.len() > config.max_word_length {
        return Err(Error::EnumerationTooLarge {
            requested: b.len() as u128,
            cap: config.max_word_length as u64,
        });
    }
    let fiber = map.fiber_letter_words(b, u64::MAX)?;
    Ok(fiber.iter().map(|a| measure.cylinder(a)).sum())
}

/// The lumped chain on `B` when `q` is lumpable under `map`, else `None`.
pub fn oracle_lumped_chain(
    q: &[Vec<f64>],
    map: &AmalgamationMap,
    tolerance: f64,
) -> Result<Option<Vec<Vec<f64>>>> {
    let ka = map.source().size();
    if q.len() != ka || q.iter().any(|row| row.len() != ka) {
        return Err(Error::DimensionMismatch("Q must be Card(A) x Card(A)".into()));
    }
    if q.iter().any(|row| (row.iter().sum::<f64>() - 1.0).abs() > tolerance) {
        return Err(Error::InvalidArgument("Q is not row-stochastic".into()));
    }
    let kb = map.target().size();
    let mut lumped = vec![vec![0.0; kb]; kb];
    for b in 0..kb {
        for b2 in 0..kb {
            let sums: Vec<f64> = map
                .fiber_letters(b as u8)
                .iter()
                .map(|&a| map.fiber_letters(b2 as u8).iter().map(|&a2| q[a as usize][a2 as usize]).sum())
                .collect();
            if sums.iter().any(|s| (s - sums[0]).abs() > tolerance) {
                return Ok(None);
            }
            lumped[b][b2] = sums[0];
        }
    }
    Ok(Some(lumped))
}

/// Stationary distribution of a row-stochastic matrix by a linear solve.
pub fn oracle_stationary(q: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = q.len();
    // (Q^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = DMatrix::from_fn(n, n, |i, j| q[j][i] - if i == j { 1.0 } else { 0.0 });
    let mut rhs = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    a.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::InvalidArgument("singular stationarity system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::Alphabet;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_bernoulli_cylinders() {
        let a = Alphabet::numeric(2).unwrap();
        let pot = LocallyConstantPotential::constant(&a, 1, 0.5f64.ln()).unwrap();
        let m = OracleMeasure::new(&pot).unwrap();
        assert_relative_eq!(m.eigen().rho, 1.0, max_relative = 1e-12);
        assert_relative_eq!(m.cylinder(&[0, 1, 1]), 0.125, max_relative = 1e-12);
        let lp = oracle_cylinder(&pot, &[1, 0], 6, &OracleConfig::default()).unwrap();
        assert_relative_eq!(lp, 0.25f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn pushforward_partitions() {
        let a = Alphabet::numeric(3).unwrap();
        let b = Alphabet::numeric(2).unwrap();
        let map = AmalgamationMap::new(&a, &b, &[0, 1, 1]).unwrap();
        let pot = LocallyConstantPotential::from_fn(&a, 1, |w| (w[0] as f64 - w[1] as f64) / 3.0).unwrap();
        let m = OracleMeasure::new(&pot).unwrap();
        let cfg = OracleConfig::default();
        let total: f64 = (0..16)
            .map(|code| {
                let mut w = vec![0u8; 4];
                decode_word(code, 2, &mut w);
                oracle_pushforward(&m, &map, &w, &cfg).unwrap()
            })
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn singleton_fibers_relabel() {
        let a = Alphabet::numeric(3).unwrap();
        let b = Alphabet::new(["x", "y"]).unwrap();
        let map = AmalgamationMap::new(&a, &b, &[1, 0, 0]).unwrap();
        let pot = LocallyConstantPotential::from_fn(&a, 1, |w| 0.3 * w[0] as f64 - 0.1 * w[1] as f64).unwrap();
        let m = OracleMeasure::new(&pot).unwrap();
        // y has the single preimage 0
        let v = oracle_pushforward(&m, &map, &[1, 1, 1], &OracleConfig::default()).unwrap();
        assert_relative_eq!(v, m.cylinder(&[0, 0, 0]), max_relative = 1e-14);
    }

    #[test]
    fn lumpability_criterion() {
        let a = Alphabet::numeric(3).unwrap();
        let b = Alphabet::numeric(2).unwrap();
        let map = AmalgamationMap::new(&a, &b, &[0, 1, 1]).unwrap();
        let same = vec![vec![0.2, 0.5, 0.3]; 3];
        let lumped = oracle_lumped_chain(&same, &map, 1e-12).unwrap().unwrap();
        assert_eq!(lumped[0], lumped[1]);
        let uniform = vec![vec![1.0 / 3.0; 3]; 3];
        let lumped = oracle_lumped_chain(&uniform, &map, 1e-12).unwrap().unwrap();
        assert_relative_eq!(lumped[1][1], 2.0 / 3.0, max_relative = 1e-12);
        let generic = vec![
            vec![0.1, 0.6, 0.3],
            vec![0.5, 0.2, 0.3],
            vec![0.3, 0.3, 0.4],
        ];
        assert!(oracle_lumped_chain(&generic, &map, 1e-12).unwrap().is_none());
    }

    #[test]
    fn stationary_solve() {
        let q = vec![vec![0.9, 0.1], vec![0.4, 0.6]];
        let pi = oracle_stationary(&q).unwrap();
        assert_relative_eq!(pi[0], 0.8, max_relative = 1e-12);
        assert_relative_eq!(pi[1], 0.2, max_relative = 1e-12);
    }
}
