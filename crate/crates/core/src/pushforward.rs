//! Amalgamated (hidden) measures, restricted transfer matrices, tail vectors
//! and the induced potential with certified error bars.
//!
//! Every induced value carries two bars. The a-priori bar is `C r^2 theta^{n/r}`.
//! The a-posteriori bar comes from the cone of possible tails: any tail of a
//! word with future `u = b_{n-r+1}^n` is a nonnegative combination of the
//! columns of the `r`-block products `M_{r,uc}`, `c` in `B^r`. The induced value
//! is a ratio of two linear functionals of that tail, so its extremes over the
//! cone are attained at the generating columns.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    decay_certificate, epsilon_budget, r_star, schedule_n, Constants, DecayCertificate,
    ErrorBudget,
};
use crate::error::{Error, Result};
use crate::markov::{build_transfer, logsumexp, MarkovGibbsMeasure, TransferMatrix, MAX_TRANSFER_DIM};
use crate::potentials::{
    approximant, DecayClass, LocallyConstantPotential, VariationBoundedPotential, VariationProfile,
};
use crate::projective::{
    project_apply_scaled, tau_of, IndexSet, IndexedMatrix, SimplexVector,
    DEFAULT_PERRON_TOL,
};
use crate::symbolic::{checked_count, decode_word, periodic_letters, word_code, AmalgamationMap, Word};

/// Largest `Card(A)^{2r}` for which the tail-cone generators are materialized.
pub const MAX_GENERATOR_ENTRIES: u64 = 1 << 24;

/// Relative rounding slack added to every certified bar.
pub const BAR_SLACK: f64 = 1e-11;

fn slack(value: f64) -> f64 {
    BAR_SLACK * (1.0 + value.abs())
}

/// The blocks `M_{r,w}`, `w` in `B^{r+1}`: the restriction of the transfer
/// matrix to `E_{w_0^{r-1}} x E_{w_1^r}`.
#[derive(Clone, Debug)]
pub struct RestrictedMatrixFamily {
    base: TransferMatrix,
    map: AmalgamationMap,
    fibers: Vec<IndexSet>,
    blocks: Vec<IndexedMatrix>,
    // per u in B^r: column-normalized generators of the tail cone over E_u,
    // column-major, Card(A)^r columns
    generators: Vec<Vec<f64>>,
    products_positive: bool,
    product_tau: f64,
}

pub fn build_family(transfer: &TransferMatrix, map: &AmalgamationMap) -> Result<RestrictedMatrixFamily> {
    if map.source() != transfer.alphabet() {
        return Err(Error::AlphabetMismatch);
    }
    let r = transfer.range();
    if r == 0 {
        return Err(Error::InvalidArgument("restricted blocks need range r >= 1".into()));
    }
    let kb = map.target().size();
    let ka = map.source().size();
    checked_count(ka, 2 * r, MAX_GENERATOR_ENTRIES)?;
    let n_words = checked_count(kb, r, MAX_GENERATOR_ENTRIES)?;
    let mut letters = vec![0u8; r];
    let fibers: Vec<IndexSet> = (0..n_words)
        .map(|code| {
            decode_word(code, kb, &mut letters);
            let codes = map.fiber_codes(&letters);
            assert!(!codes.is_empty(), "surjective amalgamations have nonempty fibers");
            codes.into()
        })
        .collect();
    let n_blocks = n_words * kb;
    let blocks = (0..n_blocks)
        .into_par_iter()
        .map(|w| {
            let (rows, cols) = (&fibers[w / kb], &fibers[w % n_words]);
            let logs: Vec<f64> = rows
                .iter()
                .flat_map(|&v| cols.iter().map(move |&v2| transfer.log_entry(v, v2)))
                .collect();
            IndexedMatrix::from_log_entries(rows.clone(), cols.clone(), &logs)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut family = RestrictedMatrixFamily {
        base: transfer.clone(),
        map: map.clone(),
        fibers,
        blocks,
        generators: Vec::new(),
        products_positive: true,
        product_tau: 0.0,
    };
    let built: Vec<(Vec<f64>, bool, f64)> = (0..n_words)
        .into_par_iter()
        .map(|u| family.cone_generators(u))
        .collect::<Result<Vec<_>>>()?;
    for (gens, positive, tau) in built {
        family.generators.push(gens);
        family.products_positive &= positive;
        family.product_tau = family.product_tau.max(tau);
    }
    Ok(family)
}

impl RestrictedMatrixFamily {
    pub fn base(&self) -> &TransferMatrix {
        &self.base
    }

    pub fn map(&self) -> &AmalgamationMap {
        &self.map
    }

    pub fn range(&self) -> usize {
        self.base.range()
    }

    /// `E_u` for the `B^r` word with code `u`, as `A^r` codes.
    pub fn fiber(&self, u: usize) -> &IndexSet {
        &self.fibers[u]
    }

    /// `M_{r,w}` for the `B^{r+1}` word with code `w`.
    pub fn block(&self, w: usize) -> &IndexedMatrix {
        &self.blocks[w]
    }

    pub fn block_for(&self, w: &[u8]) -> &IndexedMatrix {
        &self.blocks[word_code(w, self.map.target().size())]
    }

    pub fn blocks(&self) -> &[IndexedMatrix] {
        &self.blocks
    }

    /// Whether every product `M_{r,w}`, `w` in `B^{2r}`, is strictly positive.
    pub fn products_positive(&self) -> bool {
        self.products_positive
    }

    /// Largest `tau(M_{r,w})` over `w` in `B^{2r}`.
    pub fn product_tau(&self) -> f64 {
        self.product_tau
    }

    /// `M_{r,w}` for `|w| >= r+1` as the product of its `|w| - r` blocks.
    pub fn product(&self, w: &[u8]) -> Result<IndexedMatrix> {
        let r = self.range();
        if w.len() <= r {
            return Err(Error::InvalidArgument(format!(
                "block products need words of length > r = {r}"
            )));
        }
        let mut acc = self.block_for(&w[..=r]).clone();
        for j in 1..w.len() - r {
            acc = acc.matmul(self.block_for(&w[j..=j + r]))?;
        }
        Ok(acc)
    }

    fn cone_generators(&self, u: usize) -> Result<(Vec<f64>, bool, f64)> {
        let r = self.range();
        let kb = self.map.target().size();
        let n_words = self.fibers.len();
        let mut word = vec![0u8; 2 * r];
        decode_word(u, kb, &mut word[..r]);
        let rows = self.fibers[u].len();
        let mut out = Vec::new();
        let (mut positive, mut tau) = (true, 0.0f64);
        for c in 0..n_words {
            decode_word(c, kb, &mut word[r..]);
            let p = self.product(&word)?;
            positive &= p.is_positive();
            tau = tau.max(tau_of(&p));
            for j in 0..p.ncols() {
                let col: Vec<f64> = (0..rows).map(|i| p.mantissa(i, j)).collect();
                let total: f64 = col.iter().sum();
                out.extend(col.iter().map(|v| v / total));
            }
        }
        Ok((out, positive, tau))
    }

    fn generator_columns(&self, u: usize) -> impl Iterator<Item = &[f64]> {
        self.generators[u].chunks(self.fibers[u].len())
    }
}

/// Row vector stored as mantissas with a natural-log scale.
#[derive(Clone, Debug)]
struct ScaledRow {
    values: Vec<f64>,
    log_scale: f64,
}

impl ScaledRow {
    fn from_logs(logs: impl Iterator<Item = f64>) -> Self {
        let logs: Vec<f64> = logs.collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self {
            values: logs.iter().map(|v| (v - top).exp()).collect(),
            log_scale: top,
        }
    }

    fn times(&self, m: &IndexedMatrix) -> Self {
        let mut values = m.apply_left_mantissas(&self.values);
        let top = values.iter().cloned().fold(0.0f64, f64::max);
        values.iter_mut().for_each(|v| *v /= top);
        Self {
            values,
            log_scale: self.log_scale + m.log_scale() + top.ln(),
        }
    }

    fn log_dot(&self, x: &[f64]) -> f64 {
        let s: f64 = self.values.iter().zip(x).map(|(a, b)| a * b).sum();
        s.ln() + self.log_scale
    }
}

/// `nu_r`, the pushforward of `mu_{psi_r}` under the amalgamation, with the
/// restricted eigenvectors and the convergence constants of `psi_r`.
#[derive(Clone, Debug)]
pub struct PushforwardMeasure {
    family: RestrictedMatrixFamily,
    measure: MarkovGibbsMeasure,
    profile: VariationProfile,
    constants: Constants,
    // restricted right eigenvector per B^r code: simplex entries and log |R_u|_1
    right: Vec<(SimplexVector, f64)>,
}

impl PushforwardMeasure {
    pub fn new(pot: &LocallyConstantPotential, map: &AmalgamationMap) -> Result<Self> {
        Self::with_tol(pot, map, DEFAULT_PERRON_TOL)
    }

    pub fn with_tol(pot: &LocallyConstantPotential, map: &AmalgamationMap, tol: f64) -> Result<Self> {
        let transfer = build_transfer(pot)?;
        let family = build_family(&transfer, map)?;
        let measure = MarkovGibbsMeasure::new(transfer, tol)?;
        let profile = pot.variation_profile(pot.range());
        let constants = Constants::new(pot.alphabet().size(), pot.sup_norm(), &profile);
        let right = family
            .fibers
            .iter()
            .map(|fiber| {
                let logs: Vec<f64> = fiber.iter().map(|&v| measure.log_right(v)).collect();
                let total = logsumexp(logs.iter().copied());
                let entries = logs.iter().map(|l| (l - total).exp()).collect();
                Ok((SimplexVector::from_positive(fiber.clone(), entries)?, total))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family,
            measure,
            profile,
            constants,
            right,
        })
    }

    pub fn family(&self) -> &RestrictedMatrixFamily {
        &self.family
    }

    pub fn measure(&self) -> &MarkovGibbsMeasure {
        &self.measure
    }

    pub fn map(&self) -> &AmalgamationMap {
        &self.family.map
    }

    pub fn range(&self) -> usize {
        self.family.range()
    }

    pub fn profile(&self) -> &VariationProfile {
        &self.profile
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    /// `1 - exp(-s_psi)` of the approximant.
    pub fn theta(&self) -> f64 {
        self.constants.theta
    }

    fn kb(&self) -> usize {
        self.map().target().size()
    }

    fn left_row(&self, u: usize) -> ScaledRow {
        ScaledRow::from_logs(self.family.fibers[u].iter().map(|&v| self.measure.log_left(v)))
    }

    /// `log nu_r[b]` for a nonempty letter sequence over `B`.
    pub fn cylinder_log_prob_letters(&self, b: &[u8]) -> f64 {
        let r = self.range();
        let kb = self.kb();
        let m = b.len();
        if m < r {
            let extra = r - m;
            let mut word = b.to_vec();
            word.resize(r, 0);
            let count = kb.pow(extra as u32);
            return logsumexp((0..count).map(|c| {
                decode_word(c, kb, &mut word[m..]);
                self.cylinder_log_prob_letters(&word)
            }));
        }
        let (seed, seed_log) = &self.right[word_code(&b[m - r..], kb)];
        let mut x = seed.clone();
        let mut log_scale = *seed_log;
        for j in (0..m - r).rev() {
            let (next, step) = project_apply_scaled(self.family.block_for(&b[j..=j + r]), &x)
                .expect("restricted blocks are row allowable");
            x = next;
            log_scale += step;
        }
        self.left_row(word_code(&b[..r], kb)).log_dot(x.entries()) + log_scale
            - (m - r) as f64 * self.measure.pressure()
    }

    pub fn cylinder_log_prob(&self, b: &Word) -> Result<f64> {
        if b.alphabet() != self.map().target() {
            return Err(Error::AlphabetMismatch);
        }
        if b.is_empty() {
            return Err(Error::EmptyWord);
        }
        Ok(self.cylinder_log_prob_letters(b.letters()))
    }

    /// The tail vector `x_{r, b_1^n}` over `E_{b_1^r}`; `context` holds
    /// `b_1, b_2, ...` and is extended periodically to `n` letters.
    pub fn tail_vector(&self, context: &Word, n: usize) -> Result<TailVector> {
        let r = self.range();
        if context.alphabet() != self.map().target() {
            return Err(Error::AlphabetMismatch);
        }
        if n <= r {
            return Err(Error::InvalidArgument(format!("tail vectors need n > r = {r}, got {n}")));
        }
        if context.is_empty() {
            return Err(Error::EmptyWord);
        }
        let kb = self.kb();
        let b = periodic_letters(context.letters(), n);
        let u = word_code(&b[n - r..], kb);
        let (seed, _) = &self.right[u];
        let mut x = seed.clone();
        let mut log_scale = 0.0;
        for j in (0..n - r).rev() {
            let (next, step) = project_apply_scaled(self.family.block_for(&b[j..=j + r]), &x)?;
            x = next;
            log_scale += step;
        }
        // Hilbert diameter of the image of the tail cone
        let g = self.family.product(&b)?;
        let images: Vec<Vec<f64>> = self
            .family
            .generator_columns(u)
            .map(|col| g.apply_mantissas(col))
            .collect();
        let dim = x.len();
        let mut diameter = 0.0f64;
        for e in 0..dim {
            for f in e + 1..dim {
                let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
                for v in &images {
                    let t = v[e].ln() - v[f].ln();
                    hi = hi.max(t);
                    lo = lo.min(t);
                }
                diameter = diameter.max(hi - lo);
            }
        }
        let a_priori = self.constants.tail_vector_bound(r, n);
        Ok(TailVector {
            context: Word::new(self.map().target(), b)?,
            vector: x,
            log_scale,
            truncation_error: a_priori.min(diameter) + slack(0.0),
            a_priori_error: a_priori,
        })
    }

    /// `phi_r` on `b_0^n` (periodic extension of `b`), `n > r`.
    pub fn induced_potential_exact_r(&self, b: &Word, n: usize) -> Result<InducedValue> {
        let r = self.range();
        if n <= r {
            return Err(Error::InvalidArgument(format!("induced values need n > r = {r}, got {n}")));
        }
        self.induced_value(b, n)
    }

    /// Like [`Self::induced_potential_exact_r`] but also accepts `n = r`,
    /// where only the cone bar applies.
    pub fn induced_value(&self, b: &Word, n: usize) -> Result<InducedValue> {
        if b.alphabet() != self.map().target() {
            return Err(Error::AlphabetMismatch);
        }
        if b.is_empty() {
            return Err(Error::EmptyWord);
        }
        let r = self.range();
        if n < r {
            return Err(Error::InvalidArgument(format!("depth n = {n} is below r = {r}")));
        }
        let letters = periodic_letters(b.letters(), n + 1);
        let eval = self.evaluate_letters(&letters, n);
        let log_ratio = self.cylinder_log_prob_letters(&letters)
            - self.cylinder_log_prob_letters(&letters[1..]);
        Ok(InducedValue {
            word: Word::new(self.map().target(), letters)?,
            value: eval.value,
            error_bar: eval.error_bar,
            a_priori_bar: eval.a_priori,
            a_posteriori_bar: eval.upper - eval.lower,
            lower: eval.lower,
            upper: eval.upper,
            log_ratio,
            approximation_bar: 0.0,
            r,
            n,
        })
    }

    /// Core evaluation on `b_0^n` (`letters.len() > n >= r`).
    fn evaluate_letters(&self, letters: &[u8], n: usize) -> Evaluation {
        let r = self.range();
        let kb = self.kb();
        let b = &letters[..=n];
        let log_rho = self.measure.pressure();
        let mut f = self.left_row(word_code(&b[..r], kb)).times(self.family.block_for(&b[..=r]));
        let mut g = self.left_row(word_code(&b[1..=r], kb));
        for j in 1..=n - r {
            let block = self.family.block_for(&b[j..=j + r]);
            f = f.times(block);
            g = g.times(block);
        }
        let u = word_code(&b[n - r + 1..], kb);
        let seed = self.right[u].0.entries();
        let value = f.log_dot(seed) - g.log_dot(seed) - log_rho;
        let (mut lower, mut upper) = (f64::INFINITY, f64::NEG_INFINITY);
        for col in self.family.generator_columns(u) {
            let h = f.log_dot(col) - g.log_dot(col) - log_rho;
            lower = lower.min(h);
            upper = upper.max(h);
        }
        let a_priori = if n > r {
            self.constants.induced_bar(r, n)
        } else {
            f64::INFINITY
        };
        Evaluation {
            value,
            lower,
            upper,
            a_priori,
            error_bar: a_priori.min(upper - lower) + slack(value),
        }
    }

    /// `[lo, hi]` containing `phi_r(b')` for every `b'` that starts with `b`,
    /// for any `|b| >= 1`. Short words take the hull over their completions.
    pub fn value_range(&self, b: &[u8]) -> (f64, f64) {
        let r = self.range();
        if b.len() > r {
            let e = self.evaluate_letters(b, b.len() - 1);
            return (e.lower, e.upper);
        }
        let kb = self.kb();
        let m = b.len();
        let mut word = b.to_vec();
        word.resize(r + 1, 0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in 0..kb.pow((r + 1 - m) as u32) {
            decode_word(c, kb, &mut word[m..]);
            let e = self.evaluate_letters(&word, r);
            lo = lo.min(e.lower);
            hi = hi.max(e.upper);
        }
        (lo, hi)
    }

    /// Exhaustive check of `nu_r[b_0^n] / exp(S_{n+1} phi_r(b^inf))` for all
    /// `b` in `B^{n+1}`, `n <= n_max`.
    pub fn gibbs_check(&self, n_max: usize, cap: u64) -> Result<PushforwardGibbsReport> {
        gibbs_check_pushforward(self, n_max, cap)
    }
}

#[derive(Clone, Copy, Debug)]
struct Evaluation {
    value: f64,
    lower: f64,
    upper: f64,
    a_priori: f64,
    error_bar: f64,
}

/// `x_{r, b_1^n}` with its certified Hilbert-distance bound to the limit.
#[derive(Clone, Debug, Serialize)]
pub struct TailVector {
    #[serde(skip)]
    pub context: Word,
    pub vector: SimplexVector,
    /// `log |M_{r,b_1^n} R_u|_1` relative to the normalized seed.
    pub log_scale: f64,
    pub truncation_error: f64,
    pub a_priori_error: f64,
}

/// An induced-potential value and its certificate.
#[derive(Clone, Debug, Serialize)]
pub struct InducedValue {
    #[serde(skip)]
    pub word: Word,
    pub value: f64,
    /// Total certified bar on `|phi(b') - value|` over all extensions `b'`.
    pub error_bar: f64,
    /// `C r^2 theta^{n/r}` (infinite at `n = r`).
    pub a_priori_bar: f64,
    /// Width of the tail-cone range.
    pub a_posteriori_bar: f64,
    pub lower: f64,
    pub upper: f64,
    /// `log(nu_r[b_0^n] / nu_r[b_1^n])` from cylinder probabilities.
    pub log_ratio: f64,
    /// Bar between `phi_r` and `phi`; 0 in exact-r mode.
    pub approximation_bar: f64,
    pub r: usize,
    pub n: usize,
}

/// Evaluation strategy for the induced potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorMode {
    ExactR,
    DoubleLimit,
}

/// Evaluates `phi_r` at a fixed depth, or `phi` itself through an
/// approximant chosen for a tolerance.
#[derive(Clone, Debug)]
pub struct InducedPotentialEvaluator {
    mode: EvaluatorMode,
    measure: Arc<PushforwardMeasure>,
    n: usize,
    tol: Option<f64>,
    approximation_bar: f64,
    budget: Option<ErrorBudget>,
    psi_constants: Option<Constants>,
    class: DecayClass,
    psi_theta: f64,
}

impl InducedPotentialEvaluator {
    pub fn exact_r(measure: PushforwardMeasure, n: usize) -> Result<Self> {
        let r = measure.range();
        if n <= r {
            return Err(Error::InvalidArgument(format!("depth n = {n} must exceed r = {r}")));
        }
        let theta = measure.theta();
        Ok(Self {
            mode: EvaluatorMode::ExactR,
            n,
            tol: None,
            approximation_bar: 0.0,
            budget: None,
            psi_constants: None,
            class: DecayClass::LocallyConstant { range: r },
            psi_theta: theta,
            measure: Arc::new(measure),
        })
    }

    /// Picks the least `r` whose approximation bar
    /// `2 (2 eps_{r,n(r)} + C r^2 theta^{n(r)/r})` is at most `tol / 2`; the
    /// depth is then deepened per word until the exact bar is at most `tol / 2`.
    pub fn double_limit(
        psi: &VariationBoundedPotential,
        map: &AmalgamationMap,
        tol: f64,
        delta: f64,
        cap: u64,
    ) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
        if map.source() != psi.alphabet() {
            return Err(Error::AlphabetMismatch);
        }
        let plan = DoubleLimitPlan::new(psi, delta)?;
        let card = psi.alphabet().size();
        let mut best = (f64::INFINITY, 1usize);
        let mut r = 1;
        loop {
            let fits = checked_count(card, r, MAX_TRANSFER_DIM).is_ok()
                && checked_count(card, 2 * r, MAX_GENERATOR_ENTRIES.min(cap)).is_ok();
            if !fits {
                return Err(Error::Budget {
                    requested: tol,
                    achievable: 2.0 * best.0,
                    r: best.1,
                });
            }
            let bar = plan.approximation_bar(r)?;
            if bar < best.0 {
                best = (bar, r);
            }
            if bar <= tol / 2.0 {
                break;
            }
            r += 1;
        }
        let pot = approximant(psi, r, cap)?;
        let measure = PushforwardMeasure::new(&pot, map)?;
        let n = schedule_n(r, delta);
        Ok(Self {
            mode: EvaluatorMode::DoubleLimit,
            n,
            tol: Some(tol),
            approximation_bar: plan.approximation_bar(r)?,
            budget: Some(plan.budget(r)?),
            psi_constants: Some(plan.constants.clone()),
            class: psi.decay_class(),
            psi_theta: plan.constants.theta,
            measure: Arc::new(measure),
        })
    }

    pub fn mode(&self) -> EvaluatorMode {
        self.mode
    }

    pub fn measure(&self) -> &PushforwardMeasure {
        &self.measure
    }

    pub fn range(&self) -> usize {
        self.measure.range()
    }

    /// Base depth `n` (the schedule `n(r)` in double-limit mode).
    pub fn depth(&self) -> usize {
        self.n
    }

    pub fn tolerance(&self) -> Option<f64> {
        self.tol
    }

    /// Bar between `phi_r` and the limit `phi`.
    pub fn approximation_bar(&self) -> f64 {
        self.approximation_bar
    }

    pub fn budget(&self) -> Option<&ErrorBudget> {
        self.budget.as_ref()
    }

    /// Constants of `psi` itself in double-limit mode.
    pub fn psi_constants(&self) -> Option<&Constants> {
        self.psi_constants.as_ref()
    }

    pub fn evaluate(&self, b: &Word) -> Result<InducedValue> {
        let mut out = match self.tol {
            None => self.measure.induced_value(b, self.n)?,
            Some(tol) => {
                let r = self.range();
                let c = self.measure.constants();
                // least depth at which the a-priori bar alone meets tol/2
                let cap_depth = (r + 1..)
                    .step_by(r.max(1))
                    .take(1 << 16)
                    .find(|&n| c.induced_bar(r, n) <= tol / 2.0)
                    .unwrap_or(self.n.max(r + 1));
                let mut n = self.n.max(r + 1);
                loop {
                    let v = self.measure.induced_value(b, n)?;
                    if v.error_bar <= tol / 2.0 || n >= cap_depth {
                        break v;
                    }
                    n = (2 * n).min(cap_depth);
                }
            }
        };
        out.approximation_bar = self.approximation_bar;
        out.error_bar += self.approximation_bar;
        Ok(out)
    }

    /// Envelope shape for `var_n phi`; its constant is fitted separately.
    pub fn decay_certificate(&self, delta: f64, epsilon: f64) -> Result<DecayCertificate> {
        decay_certificate(&self.class, self.psi_theta, delta, epsilon)
    }
}

struct DoubleLimitPlan {
    profile: VariationProfile,
    constants: Constants,
    class: DecayClass,
    delta: f64,
    r_star: usize,
}

impl DoubleLimitPlan {
    fn new(psi: &VariationBoundedPotential, delta: f64) -> Result<Self> {
        let profile = psi.variation_profile(64)?;
        // ||psi|| <= max_a |psi(a^inf)| + var_0 psi, uniformly in r
        let sup_norm = psi.sup_norm_bound(0, u64::MAX)?;
        let constants = Constants::new(psi.alphabet().size(), sup_norm, &profile);
        let r_star = r_star(&profile, &constants, delta)?;
        Ok(Self {
            profile,
            constants,
            class: psi.decay_class(),
            delta,
            r_star,
        })
    }

    fn budget(&self, r: usize) -> Result<ErrorBudget> {
        epsilon_budget(
            &self.profile,
            r,
            schedule_n(r, self.delta),
            self.constants.d1,
            self.constants.d,
        )
    }

    fn approximation_bar(&self, r: usize) -> Result<f64> {
        if let DecayClass::LocallyConstant { range } = self.class {
            if r >= range {
                return Ok(0.0);
            }
        }
        if r < self.r_star {
            return Ok(f64::INFINITY);
        }
        let eps = self.budget(r)?.epsilon;
        let n = schedule_n(r, self.delta);
        Ok(2.0 * (2.0 * eps + self.constants.induced_bar(r, n)))
    }
}

/// `phi(b)` for a general potential, to within `tol`.
pub fn induced_potential_general(
    psi: &VariationBoundedPotential,
    map: &AmalgamationMap,
    b: &Word,
    tol: f64,
    delta: f64,
    cap: u64,
) -> Result<InducedValue> {
    InducedPotentialEvaluator::double_limit(psi, map, tol, delta, cap)?.evaluate(b)
}

/// One row of a variation report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationRow {
    pub n: usize,
    /// Largest spread of computed values among words sharing `b_0^n`.
    pub empirical_var: f64,
    /// Certified upper bound on `var_n phi`.
    pub certified_bound: f64,
    /// Twice the largest per-word error bar in the scan.
    pub error_bar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationReport {
    pub r: usize,
    /// Length of the scanned words.
    pub word_length: usize,
    pub theta: f64,
    pub approximation_bar: f64,
    pub rows: Vec<VariationRow>,
}

/// Default number of extra letters scanned past `n_max`.
pub const DEFAULT_LOOKAHEAD: usize = 6;

/// Empirical and certified `var_n` of the induced potential for `n <= n_max`.
///
/// Every word of length `L = n_max + 1 + lookahead` is evaluated at depth
/// `L - 1`. The certified bound at `n >= r` is the smaller of
/// `2 C r^2 theta^{n/r}` (`n > r`) and the widest tail-cone range over
/// `B^{n+1}`; below `r` it is the hull of the ranges of all completions.
pub fn variation_report(
    evaluator: &InducedPotentialEvaluator,
    n_max: usize,
    lookahead: usize,
    cap: u64,
) -> Result<VariationReport> {
    let pf = evaluator.measure();
    let r = pf.range();
    let kb = pf.kb();
    let length = (n_max + 1 + lookahead).max(r + 1);
    let count = checked_count(kb, length, cap)?;
    let evals: Vec<Evaluation> = (0..count)
        .into_par_iter()
        .map(|code| {
            let mut letters = vec![0u8; length];
            decode_word(code, kb, &mut letters);
            pf.evaluate_letters(&letters, length - 1)
        })
        .collect();
    let max_bar = evals.iter().map(|e| e.error_bar).fold(0.0f64, f64::max);
    let approx = evaluator.approximation_bar();

    // spreads per prefix length, folding contiguous lexicographic groups
    let mut lo: Vec<f64> = evals.iter().map(|e| e.value).collect();
    let mut hi = lo.clone();
    let mut spreads = vec![0.0; n_max + 1];
    for p in (1..=length).rev() {
        if p <= n_max + 1 {
            spreads[p - 1] = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| b - a)
                .fold(0.0f64, f64::max);
        }
        if p > 1 {
            lo = lo.chunks(kb).map(|c| c.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
            hi = hi.chunks(kb).map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        }
    }

    let c = pf.constants();
    let rows = (0..=n_max)
        .map(|n| {
            let prefixes = checked_count(kb, n + 1, cap)?;
            let widest = (0..prefixes)
                .into_par_iter()
                .map(|code| {
                    let mut letters = vec![0u8; n + 1];
                    decode_word(code, kb, &mut letters);
                    let (a, b) = pf.value_range(&letters);
                    b - a
                })
                .reduce(|| 0.0f64, f64::max);
            let a_priori = if n > r {
                2.0 * c.induced_bar(r, n)
            } else {
                f64::INFINITY
            };
            Ok(VariationRow {
                n,
                empirical_var: spreads[n],
                certified_bound: a_priori.min(widest) + slack(widest) + 2.0 * approx,
                error_bar: 2.0 * max_bar,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VariationReport {
        r,
        word_length: length,
        theta: pf.theta(),
        approximation_bar: approx,
        rows,
    })
}

/// Least-squares slope of `log y` against `x` over the positive entries.
pub fn log_linear_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PushforwardGibbsRow {
    pub n: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Largest accumulated evaluation bar on `S_{n+1} phi_r` at this `n`.
    pub accumulated_bar: f64,
}

/// Gibbs-inequality scan for `nu_r` against `phi_r` with zero pressure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PushforwardGibbsReport {
    /// `C_phi = exp(sum_m V_m)`, `V_m` the largest gap between `phi_r` and the
    /// one-step log ratio of `nu_r` over words of length `m + 1`.
    pub constant: f64,
    pub rows: Vec<PushforwardGibbsRow>,
    pub violations: usize,
}

impl PushforwardGibbsReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }

    /// Largest `|log ratio|` per row.
    pub fn log_spread(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.max_ratio.ln().abs().max(r.min_ratio.ln().abs()))
            .collect()
    }
}

/// `log nu_r[b_0^n] = sum_j log(nu_r[b_j^n] / nu_r[b_{j+1}^n])`, and each term
/// is within `V_{n-j}` of `phi_r(T^j x)` for any `x` starting with `b_0^n`.
/// For `m` past the scan `V_m <= C r^2 theta^{m/r}`, a geometric tail.
pub fn gibbs_check_pushforward(
    pf: &PushforwardMeasure,
    n_max: usize,
    cap: u64,
) -> Result<PushforwardGibbsReport> {
    let r = pf.range();
    let kb = pf.kb();
    let mut log_c = 0.0;
    let scanned = n_max.max(r);
    for m in 0..=scanned {
        let count = checked_count(kb, m + 1, cap)?;
        let v = (0..count)
            .into_par_iter()
            .map(|code| {
                let mut letters = vec![0u8; m + 1];
                decode_word(code, kb, &mut letters);
                let ratio = pf.cylinder_log_prob_letters(&letters)
                    - if m == 0 { 0.0 } else { pf.cylinder_log_prob_letters(&letters[1..]) };
                let (lo, hi) = pf.value_range(&letters);
                (hi - ratio).max(ratio - lo).max(0.0)
            })
            .reduce(|| 0.0f64, f64::max);
        log_c += v;
    }
    let c = pf.constants();
    let theta = c.theta;
    if theta > 0.0 {
        let q = theta.powf(1.0 / r as f64);
        log_c += c.induced_bar(r, scanned + 1) / (1.0 - q);
    }
    let rows = (0..=n_max)
        .map(|n| {
            let count = checked_count(kb, n + 1, cap)?;
            let depth = (n + 1).max(3 * r) + 16;
            let (lo, hi, bar) = (0..count)
                .into_par_iter()
                .map(|code| {
                    let mut letters = vec![0u8; n + 1];
                    decode_word(code, kb, &mut letters);
                    let mut sum = 0.0;
                    let mut bar = 0.0;
                    for j in 0..=n {
                        let mut shifted = letters[j..].to_vec();
                        shifted.extend_from_slice(&letters[..j]);
                        let orbit = periodic_letters(&shifted, depth + 1);
                        let e = pf.evaluate_letters(&orbit, depth);
                        sum += e.value;
                        bar += e.error_bar;
                    }
                    let v = pf.cylinder_log_prob_letters(&letters) - sum;
                    (v, v, bar)
                })
                .reduce(
                    || (f64::INFINITY, f64::NEG_INFINITY, 0.0f64),
                    |a, b| (a.0.min(b.0), a.1.max(b.1), a.2.max(b.2)),
                );
            Ok(PushforwardGibbsRow {
                n,
                min_ratio: lo.exp(),
                max_ratio: hi.exp(),
                accumulated_bar: bar,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = rows
        .iter()
        .filter(|row| {
            let widened = log_c + row.accumulated_bar + 1e-9;
            row.max_ratio.ln() > widened || row.min_ratio.ln() < -widened
        })
        .count();
    Ok(PushforwardGibbsReport {
        constant: log_c.exp(),
        rows,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{enumerate_words, Alphabet, DEFAULT_ENUMERATION_CAP};
    use crate::projective::hilbert_distance;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn merge() -> AmalgamationMap {
        let a = Alphabet::numeric(3).unwrap();
        let b = Alphabet::numeric(2).unwrap();
        AmalgamationMap::new(&a, &b, &[0, 1, 1]).unwrap()
    }

    fn random_pot(r: usize, seed: u64) -> LocallyConstantPotential {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Alphabet::numeric(3).unwrap();
        LocallyConstantPotential::from_fn(&a, r, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn fiber_sum(pf: &PushforwardMeasure, b: &[u8]) -> f64 {
        let words = pf.map().fiber_letter_words(b, 1 << 20).unwrap();
        logsumexp(words.iter().map(|w| pf.measure().cylinder_log_prob_letters(w)))
    }

    #[test]
    fn block_is_direct_restriction() {
        let pot = random_pot(1, 1);
        let t = build_transfer(&pot).unwrap();
        let fam = build_family(&t, &merge()).unwrap();
        let block = fam.block_for(&[0, 1]);
        assert_eq!((block.nrows(), block.ncols()), (1, 2));
        assert_relative_eq!(block.entry(0, 0), t.matrix().entry(0, 1), max_relative = 1e-14);
        assert_relative_eq!(block.entry(0, 1), t.matrix().entry(0, 2), max_relative = 1e-14);
        assert!(fam.products_positive());
    }

    #[test]
    fn block_sizes_are_fiber_products() {
        let pot = random_pot(2, 2);
        let fam = build_family(&build_transfer(&pot).unwrap(), &merge()).unwrap();
        let block = fam.block_for(&[1, 0, 1]);
        assert_eq!((block.nrows(), block.ncols()), (2, 2));
        let block = fam.block_for(&[1, 1, 1]);
        assert_eq!((block.nrows(), block.ncols()), (4, 4));
        assert!(fam.products_positive());
    }

    #[test]
    fn block_column_sums_rebuild_row_sums() {
        let pot = random_pot(2, 3);
        let t = build_transfer(&pot).unwrap();
        let fam = build_family(&t, &merge()).unwrap();
        for u in 0..4usize {
            let rows = fam.fiber(u).clone();
            for (i, &v) in rows.iter().enumerate() {
                let full: f64 = (0..t.dim()).map(|w| t.matrix().entry(v, w)).sum();
                let split: f64 = (0..2)
                    .map(|c| {
                        let block = fam.block(u * 2 + c);
                        (0..block.ncols()).map(|j| block.entry(i, j)).sum::<f64>()
                    })
                    .sum();
                assert_relative_eq!(full, split, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn cylinders_match_fiber_sums() {
        for r in 1..=2 {
            let pf = PushforwardMeasure::new(&random_pot(r, 10 + r as u64), &merge()).unwrap();
            for n in 1..=7 {
                let words = enumerate_words(pf.map().target(), n, DEFAULT_ENUMERATION_CAP).unwrap();
                let mut total = 0.0;
                for w in &words {
                    let lp = pf.cylinder_log_prob(w).unwrap();
                    assert_relative_eq!(lp, fiber_sum(&pf, w.letters()), max_relative = 1e-10);
                    total += lp.exp();
                }
                assert_relative_eq!(total, 1.0, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn product_case() {
        let a = Alphabet::numeric(3).unwrap();
        let p = [0.2f64, 0.3, 0.5];
        let pot = LocallyConstantPotential::from_fn(&a, 1, |w| p[w[0] as usize].ln()).unwrap();
        let pf = PushforwardMeasure::new(&pot, &merge()).unwrap();
        let q = [0.2f64, 0.8];
        let b = Word::from_indices(pf.map().target(), &[1, 0, 1, 1]).unwrap();
        let expected: f64 = b.letters().iter().map(|&l| q[l as usize].ln()).sum();
        assert_relative_eq!(pf.cylinder_log_prob(&b).unwrap(), expected, max_relative = 1e-12);
        let v = pf.induced_potential_exact_r(&b, 3).unwrap();
        assert_relative_eq!(v.value, q[1].ln(), max_relative = 1e-12);
        assert!(v.a_posteriori_bar < 1e-12);
    }

    #[test]
    fn ansatz_matches_cylinder_ratio() {
        let pf = PushforwardMeasure::new(&random_pot(2, 4), &merge()).unwrap();
        for code in 0..64 {
            let mut letters = vec![0u8; 6];
            decode_word(code, 2, &mut letters);
            let b = Word::new(pf.map().target(), letters).unwrap();
            for n in 3..6 {
                let v = pf.induced_potential_exact_r(&b, n).unwrap();
                assert_relative_eq!(v.value, v.log_ratio, epsilon = 1e-10);
                assert!(v.lower <= v.value + 1e-12 && v.value <= v.upper + 1e-12);
                assert!(v.error_bar <= v.a_priori_bar + 1e-9);
            }
        }
    }

    #[test]
    fn deeper_values_stay_in_range() {
        let pf = PushforwardMeasure::new(&random_pot(1, 5), &merge()).unwrap();
        let b = Word::from_indices(pf.map().target(), &[1, 1, 0, 1, 0, 0, 1]).unwrap();
        let shallow = pf.induced_potential_exact_r(&b, 3).unwrap();
        let deep = pf.induced_potential_exact_r(&b, 20).unwrap();
        assert!((deep.value - shallow.value).abs() <= shallow.error_bar);
        assert!(deep.a_posteriori_bar <= shallow.a_posteriori_bar + 1e-13, "{deep:?} {shallow:?}");
    }

    #[test]
    fn tail_vectors_contract() {
        let pf = PushforwardMeasure::new(&random_pot(2, 6), &merge()).unwrap();
        let ctx = Word::from_indices(pf.map().target(), &[1, 1, 0, 1, 0]).unwrap();
        let one = pf.tail_vector(&ctx, 3).unwrap();
        assert!(one.a_priori_error.is_finite());
        for m in 4..16 {
            let x = pf.tail_vector(&ctx, m).unwrap();
            let d = hilbert_distance(one.vector.entries(), x.vector.entries());
            assert!(d <= one.truncation_error, "m = {m}: {d} > {}", one.truncation_error);
        }
        let singleton = Word::from_indices(pf.map().target(), &[0, 0, 1]).unwrap();
        let x = pf.tail_vector(&singleton, 5).unwrap();
        assert_eq!(x.vector.entries(), &[1.0]);
    }

    #[test]
    fn rejects_shallow_depth() {
        let pf = PushforwardMeasure::new(&random_pot(2, 7), &merge()).unwrap();
        let b = Word::from_indices(pf.map().target(), &[1, 0, 1]).unwrap();
        assert!(pf.induced_potential_exact_r(&b, 2).is_err());
        assert!(pf.tail_vector(&b, 2).is_err());
    }

    #[test]
    fn variation_report_dominated() {
        let pf = PushforwardMeasure::new(&random_pot(1, 8), &merge()).unwrap();
        let ev = InducedPotentialEvaluator::exact_r(pf, 8).unwrap();
        let rep = variation_report(&ev, 6, 4, DEFAULT_ENUMERATION_CAP).unwrap();
        for row in &rep.rows {
            assert!(row.empirical_var < row.certified_bound, "{row:?}");
        }
        for pair in rep.rows.windows(2) {
            assert!(pair[1].certified_bound <= pair[0].certified_bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn pushforward_gibbs_product_ratios_are_one() {
        let a = Alphabet::numeric(3).unwrap();
        let p = [0.2f64, 0.3, 0.5];
        let pot = LocallyConstantPotential::from_fn(&a, 1, |w| p[w[0] as usize].ln()).unwrap();
        let pf = PushforwardMeasure::new(&pot, &merge()).unwrap();
        let rep = pf.gibbs_check(6, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(rep.holds());
        for row in &rep.rows {
            assert_relative_eq!(row.min_ratio, 1.0, max_relative = 1e-10);
            assert_relative_eq!(row.max_ratio, 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn pushforward_gibbs_generic_holds() {
        let pf = PushforwardMeasure::new(&random_pot(1, 9), &merge()).unwrap();
        let rep = pf.gibbs_check(8, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(rep.holds(), "{rep:?}");
    }

    #[test]
    fn slope_of_exact_exponential() {
        let pts: Vec<(f64, f64)> = (0..5).map(|n| (n as f64, 0.5f64.powi(n))).collect();
        assert_relative_eq!(log_linear_slope(&pts).unwrap(), 0.5f64.ln(), max_relative = 1e-12);
    }
}
