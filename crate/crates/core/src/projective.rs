//! Hilbert projective metric, Birkhoff contraction coefficients, certified
//! Perron-Frobenius eigendata and normalized inhomogeneous products.
//!
//! Matrices keep their entries as mantissas in `[0, 1]` together with one
//! shared natural-log scale, so long products never underflow: a product
//! multiplies mantissas, renormalizes by the largest entry and adds the logs.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Ordered index set of a matrix side or a vector (word codes, labels...).
pub type IndexSet = Arc<[usize]>;

/// The index set `0..n`.
pub fn range_index(n: usize) -> IndexSet {
    (0..n).collect::<Vec<_>>().into()
}

fn same_index(a: &IndexSet, b: &IndexSet) -> bool {
    Arc::ptr_eq(a, b) || a[..] == b[..]
}

/// Dense nonnegative matrix over `rows x cols`, stored as mantissas and a
/// shared log-scale: entry `(i, j)` is `mantissa(i, j) * exp(log_scale)`.
#[derive(Clone, Debug)]
pub struct IndexedMatrix {
    rows: IndexSet,
    cols: IndexSet,
    data: Vec<f64>,
    log_scale: f64,
}

impl IndexedMatrix {
    pub fn new(rows: IndexSet, cols: IndexSet, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows.len() * cols.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                entries.len(),
                rows.len(),
                cols.len()
            )));
        }
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::DimensionMismatch("empty index set".into()));
        }
        if let Some((index, &value)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(Error::NonPositiveEntry { index, value });
        }
        let mut m = Self {
            rows,
            cols,
            data: entries,
            log_scale: 0.0,
        };
        m.renormalize();
        Ok(m)
    }

    /// Builds from natural logs of the entries; `-inf` marks a zero.
    pub fn from_log_entries(rows: IndexSet, cols: IndexSet, logs: &[f64]) -> Result<Self> {
        if logs.len() != rows.len() * cols.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                logs.len(),
                rows.len(),
                cols.len()
            )));
        }
        if logs.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidArgument("log entries must be < +inf and not NaN".into()));
        }
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shift = if top.is_finite() { top } else { 0.0 };
        Ok(Self {
            rows,
            cols,
            data: logs.iter().map(|v| (v - shift).exp()).collect(),
            log_scale: shift,
        })
    }

    /// Square or rectangular matrix from nested rows, indexed `0..n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(
            range_index(rows.len()),
            range_index(ncols),
            rows.iter().flatten().copied().collect(),
        )
    }

    pub fn identity(index: IndexSet) -> Self {
        let n = index.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: index.clone(),
            cols: index,
            data,
            log_scale: 0.0,
        }
    }

    fn renormalize(&mut self) {
        let top = self.data.iter().cloned().fold(0.0f64, f64::max);
        if top > 0.0 && top != 1.0 {
            let inv = 1.0 / top;
            self.data.iter_mut().for_each(|v| *v *= inv);
            self.log_scale += top.ln();
        }
    }

    /// Fails with [`Error::ZeroRow`] if some row vanishes.
    pub fn check_row_allowable(&self) -> Result<()> {
        match self.row_slices().position(|row| row.iter().all(|&v| v == 0.0)) {
            Some(i) => Err(Error::ZeroRow(i)),
            None => Ok(()),
        }
    }

    pub fn rows(&self) -> &IndexSet {
        &self.rows
    }

    pub fn cols(&self) -> &IndexSet {
        &self.cols
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn is_square(&self) -> bool {
        same_index(&self.rows, &self.cols)
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn mantissas(&self) -> &[f64] {
        &self.data
    }

    pub fn mantissa(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols.len() + j]
    }

    /// Entry value; may underflow for extreme scales, see [`Self::log_entry`].
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.mantissa(i, j) * self.log_scale.exp()
    }

    pub fn log_entry(&self, i: usize, j: usize) -> f64 {
        self.mantissa(i, j).ln() + self.log_scale
    }

    pub fn row_slices(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.len())
    }

    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }

    /// `c * M` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale factor {c} must be positive")));
        }
        let mut m = self.clone();
        m.log_scale += c.ln();
        Ok(m)
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.nrows(), self.ncols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Self {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            data,
            log_scale: self.log_scale,
        }
    }

    pub fn matmul(&self, other: &IndexedMatrix) -> Result<Self> {
        if !same_index(&self.cols, &other.rows) {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows(),
                self.ncols(),
                other.nrows(),
                other.ncols()
            )));
        }
        let (n, k, m) = (self.nrows(), self.ncols(), other.ncols());
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let out = &mut data[i * m..(i + 1) * m];
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[l * m..(l + 1) * m];
                for (o, &b) in out.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        let mut prod = Self {
            rows: self.rows.clone(),
            cols: other.cols.clone(),
            data,
            log_scale: self.log_scale + other.log_scale,
        };
        prod.renormalize();
        Ok(prod)
    }

    /// `M^k` for square `M` by repeated squaring; `M^0` is the identity.
    pub fn pow(&self, mut k: usize) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("power of a non-square matrix".into()));
        }
        let mut result = Self::identity(self.rows.clone());
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.matmul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base)?;
            }
        }
        Ok(result)
    }

    /// Mantissa product `M x` (the log-scale is not applied).
    pub fn apply_mantissas(&self, x: &[f64]) -> Vec<f64> {
        self.row_slices()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Mantissa product `x^T M`.
    pub fn apply_left_mantissas(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols()];
        for (row, &xi) in self.row_slices().zip(x) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += xi * a;
            }
        }
        out
    }
}

/// A strictly positive probability vector over an index set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimplexVector {
    #[serde(skip)]
    index: IndexSet,
    entries: Vec<f64>,
}

impl SimplexVector {
    /// Normalizes a strictly positive vector onto the simplex.
    pub fn from_positive(index: IndexSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != index.len() || values.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for an index set of size {}",
                values.len(),
                index.len()
            )));
        }
        if let Some((i, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::NonPositiveEntry { index: i, value: v });
        }
        let total: f64 = values.iter().sum();
        Ok(Self {
            index,
            entries: values.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn uniform(index: IndexSet) -> Self {
        let n = index.len();
        Self {
            index,
            entries: vec![1.0 / n as f64; n],
        }
    }

    pub fn index(&self) -> &IndexSet {
        &self.index
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `max_{e,f} log(x_e y_f / (x_f y_e))` for positive (not necessarily
/// normalized) vectors of equal length.
pub fn hilbert_distance(x: &[f64], y: &[f64]) -> f64 {
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for (a, b) in x.iter().zip(y) {
        let r = a.ln() - b.ln();
        hi = hi.max(r);
        lo = lo.min(r);
    }
    (hi - lo).max(0.0)
}

/// Hilbert projective distance on the simplex.
pub fn hilbert_metric(x: &SimplexVector, y: &SimplexVector) -> Result<f64> {
    if !same_index(&x.index, &y.index) {
        return Err(Error::IndexMismatch);
    }
    Ok(hilbert_distance(&x.entries, &y.entries))
}

/// Birkhoff's cross-ratio `Phi(M)`: the minimum of
/// `M(e,e') M(f,f') / (M(e,f') M(f,e'))`, or 0 when `M` has a zero entry.
pub fn phi_of(m: &IndexedMatrix) -> f64 {
    if !m.is_positive() {
        return 0.0;
    }
    // The four-index minimum splits as min over (e, f) of
    // [min_{e'} M(e,e')/M(f,e')] * [min_{f'} M(f,f')/M(e,f')].
    let rows: Vec<&[f64]> = m.row_slices().collect();
    let mut best = 1.0f64;
    for (e, re) in rows.iter().enumerate() {
        for rf in rows.iter().skip(e + 1) {
            let (mut a, mut b) = (f64::INFINITY, f64::INFINITY);
            for (x, y) in re.iter().zip(rf.iter()) {
                a = a.min(x / y);
                b = b.min(y / x);
            }
            best = best.min(a * b);
        }
    }
    best.min(1.0)
}

/// Birkhoff contraction coefficient `(1 - sqrt(Phi)) / (1 + sqrt(Phi))`.
pub fn tau_of(m: &IndexedMatrix) -> f64 {
    tau_from_phi(phi_of(m))
}

pub fn tau_from_phi(phi: f64) -> f64 {
    let s = phi.sqrt();
    (1.0 - s) / (1.0 + s)
}

/// `F_M x = M x / |M x|_1`.
pub fn project_apply(m: &IndexedMatrix, x: &SimplexVector) -> Result<SimplexVector> {
    project_apply_scaled(m, x).map(|(v, _)| v)
}

/// [`project_apply`] that also returns `log |M x|_1`, scale included.
pub fn project_apply_scaled(m: &IndexedMatrix, x: &SimplexVector) -> Result<(SimplexVector, f64)> {
    if !same_index(&m.cols, &x.index) {
        return Err(Error::IndexMismatch);
    }
    let y = m.apply_mantissas(&x.entries);
    if let Some(i) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroRow(i));
    }
    let norm: f64 = y.iter().sum();
    let entries = y.into_iter().map(|v| v / norm).collect();
    Ok((
        SimplexVector {
            index: m.rows.clone(),
            entries,
        },
        norm.ln() + m.log_scale,
    ))
}

/// `chain[0] * chain[1] * ... * chain[k-1] * seed`, projected, applying the
/// last matrix first. Returns the simplex vector and the accumulated
/// `log |product * seed|_1`.
pub fn normalized_product(
    chain: &[IndexedMatrix],
    seed: &SimplexVector,
) -> Result<(SimplexVector, f64)> {
    let mut x = seed.clone();
    let mut log_scale = 0.0;
    for m in chain.iter().rev() {
        if !same_index(&m.cols, &x.index) {
            return Err(Error::DimensionMismatch(format!(
                "matrix columns ({}) do not match vector index ({})",
                m.ncols(),
                x.len()
            )));
        }
        let (next, step) = project_apply_scaled(m, &x)?;
        x = next;
        log_scale += step;
    }
    Ok((x, log_scale))
}

/// Least `l` with `M^l > 0`, searched up to the Wielandt bound `(n-1)^2 + 1`.
pub fn primitivity_index(m: &IndexedMatrix) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("primitivity of a non-square matrix".into()));
    }
    let n = m.nrows();
    let words = n.div_ceil(64);
    let pattern: Vec<Vec<u64>> = m
        .row_slices()
        .map(|row| {
            let mut bits = vec![0u64; words];
            for (j, &v) in row.iter().enumerate() {
                if v > 0.0 {
                    bits[j / 64] |= 1 << (j % 64);
                }
            }
            bits
        })
        .collect();
    let full: Vec<u64> = (0..words)
        .map(|w| {
            let bits_here = (n - w * 64).min(64);
            if bits_here == 64 {
                u64::MAX
            } else {
                (1u64 << bits_here) - 1
            }
        })
        .collect();
    let wielandt = (n - 1) * (n - 1) + 1;
    let mut power = pattern.clone();
    for l in 1..=wielandt {
        if power.iter().all(|row| *row == full) {
            return Ok(l);
        }
        power = power
            .iter()
            .map(|row| {
                let mut next = vec![0u64; words];
                for (j, target) in pattern.iter().enumerate() {
                    if row[j / 64] >> (j % 64) & 1 == 1 {
                        for (o, t) in next.iter_mut().zip(target) {
                            *o |= t;
                        }
                    }
                }
                next
            })
            .collect();
    }
    Err(Error::NotPrimitive(wielandt))
}

/// Eigendata of a primitive matrix with its convergence certificate.
#[derive(Clone, Debug, Serialize)]
pub struct PerronData {
    pub rho: f64,
    pub log_rho: f64,
    /// Right eigenvector on the simplex.
    pub right: SimplexVector,
    /// Left eigenvector scaled so that `left . right = 1`.
    pub left: Vec<f64>,
    pub primitivity_index: usize,
    /// `tau(M^l)`.
    pub tau: f64,
    /// A-priori bound on the Hilbert distance to the true right eigenvector.
    pub certified_residual: f64,
    /// Same bound for the (normalized) left eigenvector.
    pub certified_residual_left: f64,
    /// Observed `delta(x_n, F_M^l x_n)` at termination, right iteration.
    pub a_posteriori_delta: f64,
    /// `max |M R - rho R| / rho`.
    pub residual_right: f64,
    /// `max |L M - rho L| / rho`, with `L` on the simplex.
    pub residual_left: f64,
    pub iterations: usize,
    /// False when a warm start replaced the uniform seed.
    pub certified: bool,
}

impl PerronData {
    pub fn index(&self) -> &IndexSet {
        self.right.index()
    }
}

#[derive(Clone, Debug)]
pub struct PerronOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Seed for the right iteration; makes the result uncertified.
    pub warm_start: Option<Vec<f64>>,
}

pub const DEFAULT_PERRON_TOL: f64 = 1e-12;

impl Default for PerronOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_PERRON_TOL,
            max_iterations: 5_000_000,
            warm_start: None,
        }
    }
}

struct FixedPoint {
    x: Vec<f64>,
    bound: f64,
    a_posteriori: f64,
    iterations: usize,
}

/// Iterates `F_M` until `l delta(x_0, F x_0) / (1 - tau) * tau^floor(n/l) <= tol`.
fn certified_fixed_point(
    m: &IndexedMatrix,
    seed: Vec<f64>,
    l: usize,
    tau: f64,
    tol: f64,
    max_iterations: usize,
) -> Result<FixedPoint> {
    let step = |x: &[f64]| -> Vec<f64> {
        let y = m.apply_mantissas(x);
        let s: f64 = y.iter().sum();
        y.into_iter().map(|v| v / s).collect()
    };
    let x0 = seed;
    let x1 = step(&x0);
    let d0 = hilbert_distance(&x0, &x1);
    let prefactor = l as f64 * d0 / (1.0 - tau);
    let bound_at = |n: usize| {
        if prefactor == 0.0 {
            0.0
        } else {
            prefactor * tau.powi((n / l) as i32)
        }
    };
    // smallest n with bound_at(n) <= tol
    let needed = if prefactor <= tol {
        0
    } else if !(tau < 1.0) || !prefactor.is_finite() {
        return Err(Error::IterationCap {
            tol,
            iterations: max_iterations,
            bound: f64::INFINITY,
        });
    } else if tau == 0.0 {
        l
    } else {
        let blocks = ((tol / prefactor).ln() / tau.ln()).ceil().max(0.0);
        if !blocks.is_finite() || blocks * l as f64 > max_iterations as f64 {
            return Err(Error::IterationCap {
                tol,
                iterations: max_iterations,
                bound: bound_at(max_iterations),
            });
        }
        let mut n = blocks as usize * l;
        while n >= l && bound_at(n - l) <= tol {
            n -= l;
        }
        while bound_at(n) > tol {
            n += l;
            if n > max_iterations {
                return Err(Error::IterationCap {
                    tol,
                    iterations: max_iterations,
                    bound: bound_at(n),
                });
            }
        }
        n
    };
    let mut x = x0;
    for _ in 0..needed {
        x = step(&x);
    }
    let mut ahead = x.clone();
    for _ in 0..l {
        ahead = step(&ahead);
    }
    Ok(FixedPoint {
        a_posteriori: hilbert_distance(&x, &ahead),
        bound: bound_at(needed),
        x,
        iterations: needed,
    })
}

/// Certified Perron-Frobenius data by projective power iteration.
pub fn perron_data(m: &IndexedMatrix, tol: f64) -> Result<PerronData> {
    perron_data_with(
        m,
        &PerronOptions {
            tol,
            ..PerronOptions::default()
        },
    )
}

pub fn perron_data_with(m: &IndexedMatrix, opts: &PerronOptions) -> Result<PerronData> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {}", opts.tol)));
    }
    let l = primitivity_index(m)?;
    let tau = tau_of(&m.pow(l)?);
    let n = m.nrows();
    let uniform = vec![1.0 / n as f64; n];

    let certified = opts.warm_start.is_none();
    let seed = match &opts.warm_start {
        Some(w) => SimplexVector::from_positive(m.rows.clone(), w.clone())?.entries,
        None => uniform.clone(),
    };
    let right = certified_fixed_point(m, seed, l, tau, opts.tol, opts.max_iterations)?;
    let mt = m.transpose();
    let left = certified_fixed_point(&mt, uniform, l, tau, opts.tol, opts.max_iterations)?;

    let mr = m.apply_mantissas(&right.x);
    let rho_mantissa: f64 = mr.iter().sum();
    let residual_right = mr
        .iter()
        .zip(&right.x)
        .map(|(a, b)| (a - rho_mantissa * b).abs())
        .fold(0.0, f64::max)
        / rho_mantissa;
    let lm = m.apply_left_mantissas(&left.x);
    let rho_left: f64 = lm.iter().sum();
    let residual_left = lm
        .iter()
        .zip(&left.x)
        .map(|(a, b)| (a - rho_left * b).abs())
        .fold(0.0, f64::max)
        / rho_left;

    let dot: f64 = left.x.iter().zip(&right.x).map(|(a, b)| a * b).sum();
    let log_rho = rho_mantissa.ln() + m.log_scale;
    Ok(PerronData {
        rho: log_rho.exp(),
        log_rho,
        right: SimplexVector {
            index: m.rows.clone(),
            entries: right.x,
        },
        left: left.x.iter().map(|v| v / dot).collect(),
        primitivity_index: l,
        tau,
        certified_residual: right.bound,
        certified_residual_left: left.bound,
        a_posteriori_delta: right.a_posteriori,
        residual_right,
        residual_left,
        iterations: right.iterations.max(left.iterations),
        certified,
    })
}
