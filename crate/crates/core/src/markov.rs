//! Transfer matrices of `(r+1)`-symbol potentials, their Gibbs (Parry)
//! measures, pressure and periodic-point approximations.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::{birkhoff_sum_periodic, LocallyConstantPotential};
use crate::projective::{
    perron_data, range_index, IndexedMatrix, PerronData, DEFAULT_PERRON_TOL,
};
use crate::symbolic::{checked_count, decode_word, word_code, Alphabet, Word};

/// Largest transfer-matrix dimension `Card(A)^r` accepted by default.
pub const MAX_TRANSFER_DIM: u64 = 4096;

/// `log(sum(exp(x)))` without overflow; `-inf` for an empty or all `-inf` input.
pub fn logsumexp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// `M_psi` over `A^r`: entry `(v, w)` is `exp(psi(v w_{r-1}))` when
/// `v_1^{r-1} = w_0^{r-2}` and 0 otherwise. Row and column `i` is the word
/// with code `i`.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    potential: LocallyConstantPotential,
    matrix: IndexedMatrix,
}

pub fn build_transfer(pot: &LocallyConstantPotential) -> Result<TransferMatrix> {
    let k = pot.alphabet().size();
    let r = pot.range();
    let dim = checked_count(k, r, MAX_TRANSFER_DIM)?;
    let mut logs = vec![f64::NEG_INFINITY; dim * dim];
    for v in 0..dim {
        for c in 0..k {
            let w = (v * k + c) % dim;
            logs[v * dim + w] = pot.value_at_code(v * k + c);
        }
    }
    let index = range_index(dim);
    let matrix = IndexedMatrix::from_log_entries(index.clone(), index, &logs)?;
    Ok(TransferMatrix {
        potential: pot.clone(),
        matrix,
    })
}

impl TransferMatrix {
    pub fn potential(&self) -> &LocallyConstantPotential {
        &self.potential
    }

    pub fn matrix(&self) -> &IndexedMatrix {
        &self.matrix
    }

    pub fn range(&self) -> usize {
        self.potential.range()
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.potential.alphabet()
    }

    /// `Card(A)^r`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `log M(v, w)` for `r`-block codes, `-inf` off the overlap pattern.
    pub fn log_entry(&self, v: usize, w: usize) -> f64 {
        let k = self.alphabet().size();
        if (v * k) % self.dim() == w - w % k {
            self.potential.value_at_code(v * k + w % k)
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// The Gibbs measure of an `(r+1)`-symbol potential, given by the Parry
/// formula `mu[a_0^n] = L(a_0^{r-1}) prod M / rho^{n-r+1} R(a_{n-r+1}^n)`.
#[derive(Clone, Debug)]
pub struct MarkovGibbsMeasure {
    transfer: TransferMatrix,
    perron: PerronData,
    log_left: Vec<f64>,
    log_right: Vec<f64>,
    gibbs_constant: f64,
}

pub fn measure_from(pot: &LocallyConstantPotential, tol: f64) -> Result<MarkovGibbsMeasure> {
    MarkovGibbsMeasure::new(build_transfer(pot)?, tol)
}

impl MarkovGibbsMeasure {
    pub fn new(transfer: TransferMatrix, tol: f64) -> Result<Self> {
        let perron = perron_data(transfer.matrix(), tol)?;
        let log_left: Vec<f64> = perron.left.iter().map(|v| v.ln()).collect();
        let log_right: Vec<f64> = perron.right.entries().iter().map(|v| v.ln()).collect();
        let mut m = Self {
            transfer,
            perron,
            log_left,
            log_right,
            gibbs_constant: 1.0,
        };
        m.gibbs_constant = m.closed_form_gibbs_constant();
        Ok(m)
    }

    pub fn with_default_tol(pot: &LocallyConstantPotential) -> Result<Self> {
        measure_from(pot, DEFAULT_PERRON_TOL)
    }

    /// Smallest constant of the form below that the Parry formula certifies.
    ///
    /// For `|w| = m > r`, `mu[w] e^{m P - S_m psi(w^inf)}` equals
    /// `L(first) R(last) rho^r e^{-(last r window terms)}`; for `m <= r` it is
    /// a sum of `k^{r-m}` products `L(u) R(u)` times `rho^m e^{-S_m psi}`.
    fn closed_form_gibbs_constant(&self) -> f64 {
        let r = self.range();
        let k = self.alphabet().size() as f64;
        let norm = self.transfer.potential.sup_norm();
        let (lmax, lmin) = extremes(&self.log_left);
        let (rmax, rmin) = extremes(&self.log_right);
        let (lr_max, lr_min) = (lmax + rmax, lmin + rmin);
        let log_rho = self.perron.log_rho;
        let mut log_c = 0.0f64;
        for m in 1..=r + 1 {
            let steps = m.min(r) as f64;
            let multiplicity = if m <= r { (r - m) as f64 * k.ln() } else { 0.0 };
            let upper = multiplicity + lr_max + steps * (log_rho + norm);
            let lower = multiplicity + lr_min + steps * (log_rho - norm);
            log_c = log_c.max(upper).max(-lower);
        }
        log_c.exp()
    }

    pub fn transfer(&self) -> &TransferMatrix {
        &self.transfer
    }

    pub fn perron(&self) -> &PerronData {
        &self.perron
    }

    pub fn potential(&self) -> &LocallyConstantPotential {
        self.transfer.potential()
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.transfer.alphabet()
    }

    pub fn range(&self) -> usize {
        self.transfer.range()
    }

    pub fn rho(&self) -> f64 {
        self.perron.rho
    }

    /// `P = log rho`.
    pub fn pressure(&self) -> f64 {
        self.perron.log_rho
    }

    pub fn gibbs_constant(&self) -> f64 {
        self.gibbs_constant
    }

    /// `log L(v)` for an `r`-block code.
    pub fn log_left(&self, code: usize) -> f64 {
        self.log_left[code]
    }

    /// `log R(v)` for an `r`-block code.
    pub fn log_right(&self, code: usize) -> f64 {
        self.log_right[code]
    }

    /// `log mu[w]` for a nonempty letter sequence over `A`.
    pub fn cylinder_log_prob_letters(&self, w: &[u8]) -> f64 {
        let r = self.range();
        let k = self.alphabet().size();
        let m = w.len();
        if m < r {
            // sum the |u| = r formula L(u) R(u) over completions of w
            let block = k.pow((r - m) as u32);
            let start = word_code(w, k) * block;
            return logsumexp((start..start + block).map(|u| self.log_left[u] + self.log_right[u]));
        }
        let pot = self.potential();
        let windows: f64 = (0..m - r).map(|j| pot.value(&w[j..=j + r])).sum();
        self.log_left[word_code(&w[..r], k)] + windows - (m - r) as f64 * self.perron.log_rho
            + self.log_right[word_code(&w[m - r..], k)]
    }

    pub fn cylinder_log_prob(&self, w: &Word) -> Result<f64> {
        if w.alphabet() != self.alphabet() {
            return Err(Error::AlphabetMismatch);
        }
        Ok(self.cylinder_log_prob_letters(w.letters()))
    }

    /// `(word, log mu[word])` for every word of length `n`, lexicographic.
    pub fn cylinder_table(&self, n: usize, cap: u64) -> Result<Vec<(Word, f64)>> {
        if n == 0 {
            return Err(Error::EmptyWord);
        }
        let k = self.alphabet().size();
        let count = checked_count(k, n, cap)?;
        (0..count)
            .map(|code| {
                let mut letters = vec![0u8; n];
                decode_word(code, k, &mut letters);
                let lp = self.cylinder_log_prob_letters(&letters);
                Ok((Word::new(self.alphabet(), letters)?, lp))
            })
            .collect()
    }

    /// Exhaustive Gibbs-inequality scan over words of length `1..=n_max+1`.
    pub fn gibbs_inequality_check(&self, n_max: usize, cap: u64) -> Result<GibbsReport> {
        let k = self.alphabet().size();
        let pot = self.potential();
        let p = self.pressure();
        let log_c = self.gibbs_constant.ln();
        let mut rows = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let m = n + 1;
            let count = checked_count(k, m, cap)?;
            let (lo, hi) = (0..count)
                .into_par_iter()
                .map(|code| {
                    let mut letters = vec![0u8; m];
                    decode_word(code, k, &mut letters);
                    let lp = self.cylinder_log_prob_letters(&letters);
                    let s = birkhoff_sum_periodic(pot, &letters);
                    let v = lp - (s - m as f64 * p);
                    (v, v)
                })
                .reduce(
                    || (f64::INFINITY, f64::NEG_INFINITY),
                    |a, b| (a.0.min(b.0), a.1.max(b.1)),
                );
            rows.push(GibbsRow {
                n,
                min_ratio: lo.exp(),
                max_ratio: hi.exp(),
            });
        }
        Ok(GibbsReport::new(self.gibbs_constant, log_c, rows))
    }

    /// `log P_r^(p)[w]`: the weight of period-`p` points in `[w]` relative to
    /// all period-`p` points, via `e_last^T M^{p-|w|+r} e_first` and the trace
    /// of `M^p`.
    pub fn periodic_log_measure(&self, p: usize, w: &[u8]) -> Result<f64> {
        periodic_log_measure(&self.transfer, p, w)
    }
}

fn extremes(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &v| (hi.max(v), lo.min(v)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GibbsRow {
    pub n: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Extremal values of `mu[w] / exp(S_{n+1} psi(w) - (n+1) P)` per `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GibbsReport {
    pub constant: f64,
    pub rows: Vec<GibbsRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Number of `n` whose extremal ratio leaves `[1/C, C]`.
    pub violations: usize,
}

/// Relative slack for floating-point rounding in ratio checks.
pub const RATIO_SLACK: f64 = 1e-9;

impl GibbsReport {
    pub fn new(constant: f64, log_c: f64, rows: Vec<GibbsRow>) -> Self {
        let min_ratio = rows.iter().map(|r| r.min_ratio).fold(f64::INFINITY, f64::min);
        let max_ratio = rows.iter().map(|r| r.max_ratio).fold(f64::NEG_INFINITY, f64::max);
        let violations = rows
            .iter()
            .filter(|r| {
                r.max_ratio.ln() > log_c + RATIO_SLACK || r.min_ratio.ln() < -log_c - RATIO_SLACK
            })
            .count();
        Self {
            constant,
            rows,
            min_ratio,
            max_ratio,
            violations,
        }
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// `(1/n) log sum_{a in Per_n} exp(S_n psi(a))` by enumerating `A^n`.
pub fn pressure_periodic(pot: &LocallyConstantPotential, n: usize, cap: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    let k = pot.alphabet().size();
    let count = checked_count(k, n, cap)?;
    let sums: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|code| {
            let mut letters = vec![0u8; n];
            decode_word(code, k, &mut letters);
            birkhoff_sum_periodic(pot, &letters)
        })
        .collect();
    Ok(logsumexp(sums) / n as f64)
}

/// `(1/n) log Trace(M^n)`; closed paths of length `n` in the overlap graph
/// are exactly the period-`n` points, so this equals [`pressure_periodic`].
pub fn pressure_trace(transfer: &TransferMatrix, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    Ok(log_trace(&transfer.matrix().pow(n)?) / n as f64)
}

fn log_trace(m: &IndexedMatrix) -> f64 {
    let diag: f64 = (0..m.nrows()).map(|i| m.mantissa(i, i)).sum();
    diag.ln() + m.log_scale()
}

/// Matrix form of the periodic-point measure `P_r^(p)[w]`, in log.
pub fn periodic_log_measure(transfer: &TransferMatrix, p: usize, w: &[u8]) -> Result<f64> {
    let r = transfer.range();
    let m = w.len();
    if m == 0 {
        return Err(Error::EmptyWord);
    }
    if p <= m + r {
        return Err(Error::InvalidArgument(format!(
            "period {p} must exceed |w| + r = {}",
            m + r
        )));
    }
    let k = transfer.alphabet().size();
    let denominator = log_trace(&transfer.matrix().pow(p)?);
    if m >= r {
        let pot = transfer.potential();
        let inner: f64 = (0..m - r).map(|j| pot.value(&w[j..=j + r])).sum();
        let closing = transfer.matrix().pow(p - m + r)?;
        let (first, last) = (word_code(&w[..r], k), word_code(&w[m - r..], k));
        Ok(inner + closing.log_entry(last, first) - denominator)
    } else {
        // each completion zeta of w to an r-block closes its own loop
        let full = transfer.matrix().pow(p)?;
        let block = k.pow((r - m) as u32);
        let start = word_code(w, k) * block;
        let numerator = logsumexp((start..start + block).map(|z| full.log_entry(z, z)));
        Ok(numerator - denominator)
    }
}
