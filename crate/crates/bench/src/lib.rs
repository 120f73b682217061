//! Fixtures shared by the benchmarks.

use hidden_gibbs::{Alphabet, AmalgamationMap, IndexedMatrix, LocallyConstantPotential};

/// Deterministic pseudo-random table in `[-1, 1)`.
pub fn potential(k: usize, r: usize, seed: u64) -> LocallyConstantPotential {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let table = (0..k.pow(r as u32 + 1))
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    LocallyConstantPotential::new(&Alphabet::numeric(k).unwrap(), r, table).unwrap()
}

/// Merges the upper half of `0..k` into one target letter.
pub fn halving_map(k: usize) -> AmalgamationMap {
    let table: Vec<usize> = (0..k).map(|a| usize::from(a >= k / 2)).collect();
    AmalgamationMap::new(&Alphabet::numeric(k).unwrap(), &Alphabet::numeric(2).unwrap(), &table).unwrap()
}

/// Strictly positive `n x n` matrix.
pub fn positive_matrix(n: usize) -> IndexedMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 1.0 + ((i * 7 + j * 13) % 11) as f64 / 4.0).collect())
        .collect();
    IndexedMatrix::from_rows(&rows).unwrap()
}
