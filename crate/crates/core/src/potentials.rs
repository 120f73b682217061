//! Potentials on the full shift: locally constant tables, general potentials
//! with a certified modulus of continuity, and their variation profiles.
//!
//! Values are natural-log weights throughout.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::symbolic::{checked_count, decode_word, word_code, Alphabet, Word};

/// A potential depending on the first `r + 1` symbols only, stored as a
/// table over `A^{r+1}` indexed by word code.
#[derive(Clone, Debug)]
pub struct LocallyConstantPotential {
    alphabet: Alphabet,
    range: usize,
    table: Vec<f64>,
    sup_norm: f64,
    approximation_error: Option<f64>,
}

impl LocallyConstantPotential {
    pub fn new(alphabet: &Alphabet, range: usize, table: Vec<f64>) -> Result<Self> {
        if range == 0 {
            return Err(Error::InvalidPotential("range r must be at least 1".into()));
        }
        let expected = checked_count(alphabet.size(), range + 1, u64::MAX)?;
        if table.len() != expected {
            return Err(Error::InvalidPotential(format!(
                "table has {} entries, expected {expected}",
                table.len()
            )));
        }
        if let Some(i) = table.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential(format!(
                "table entry {i} is not finite ({})",
                table[i]
            )));
        }
        let sup_norm = table.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            alphabet: alphabet.clone(),
            range,
            table,
            sup_norm,
            approximation_error: None,
        })
    }

    /// Tabulates `f` over `A^{r+1}`.
    pub fn from_fn(alphabet: &Alphabet, range: usize, mut f: impl FnMut(&[u8]) -> f64) -> Result<Self> {
        let k = alphabet.size();
        let count = checked_count(k, range + 1, u64::MAX)?;
        let mut letters = vec![0u8; range + 1];
        let table = (0..count)
            .map(|code| {
                decode_word(code, k, &mut letters);
                f(&letters)
            })
            .collect();
        Self::new(alphabet, range, table)
    }

    pub fn constant(alphabet: &Alphabet, range: usize, value: f64) -> Result<Self> {
        Self::from_fn(alphabet, range, |_| value)
    }

    /// `psi(a) = ln w(a_0)`: the Gibbs measure is the Bernoulli product
    /// measure with weights proportional to `w`.
    pub fn first_symbol_weighted(alphabet: &Alphabet, weights: &[f64]) -> Result<Self> {
        check_weights(alphabet, weights)?;
        Self::from_fn(alphabet, 1, |w| weights[w[0] as usize].ln())
    }

    /// `psi(a) = ln Q(a_0, a_1)` for a nonnegative weight matrix `Q` with
    /// positive entries. A row-stochastic `Q` gives the stationary chain.
    pub fn from_weight_matrix(alphabet: &Alphabet, q: &[Vec<f64>]) -> Result<Self> {
        let k = alphabet.size();
        if q.len() != k || q.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidPotential(format!("weight matrix must be {k}x{k}")));
        }
        if q.iter().flatten().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidPotential(
                "weight matrix entries must be positive and finite".into(),
            ));
        }
        Self::from_fn(alphabet, 1, |w| q[w[0] as usize][w[1] as usize].ln())
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// The `r` in "(r+1)-symbol potential".
    pub fn range(&self) -> usize {
        self.range
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Recorded bound on `||psi - psi_r||` when built by [`approximant`].
    pub fn approximation_error(&self) -> Option<f64> {
        self.approximation_error
    }

    /// Value on any point whose first `r + 1` letters are `letters[..=r]`.
    pub fn value(&self, letters: &[u8]) -> f64 {
        self.table[word_code(&letters[..=self.range], self.alphabet.size())]
    }

    pub fn value_at_code(&self, code: usize) -> f64 {
        self.table[code]
    }

    /// The same potential viewed as an `(r'+1)`-symbol potential, `r' >= r`.
    pub fn with_range(&self, new_range: usize) -> Result<Self> {
        if new_range < self.range {
            return Err(Error::InvalidArgument(format!(
                "cannot lower range {} to {new_range}",
                self.range
            )));
        }
        let mut lifted = Self::from_fn(&self.alphabet, new_range, |w| self.value(w))?;
        lifted.approximation_error = self.approximation_error;
        Ok(lifted)
    }

    /// Exact variation profile; `var_k = 0` for `k >= r`.
    pub fn variation_profile(&self, horizon: usize) -> VariationProfile {
        let values: Vec<f64> = (0..=horizon).map(|n| variation(self, n)).collect();
        VariationProfile::new(values, DecayClass::LocallyConstant { range: self.range })
            .expect("locally constant profiles are always certifiable")
    }

    pub fn to_document(&self, separator: &str) -> PotentialDocument {
        let k = self.alphabet.size();
        let mut letters = vec![0u8; self.range + 1];
        let entries = self
            .table
            .iter()
            .enumerate()
            .map(|(code, &value)| {
                decode_word(code, k, &mut letters);
                let word = Word::new(&self.alphabet, letters.clone())
                    .expect("decoded letters are in range")
                    .render(separator);
                TableEntry { word, value }
            })
            .collect();
        PotentialDocument {
            alphabet: self.alphabet.symbols().to_vec(),
            r: self.range,
            entries,
        }
    }

    /// Reads a table document; every word of `A^{r+1}` must appear exactly once.
    pub fn from_document(doc: &PotentialDocument, separator: &str) -> Result<Self> {
        let alphabet = Alphabet::new(doc.alphabet.iter().cloned())?;
        Self::from_entries(&alphabet, doc.r, &doc.entries, separator)
    }

    pub fn from_entries(
        alphabet: &Alphabet,
        range: usize,
        entries: &[TableEntry],
        separator: &str,
    ) -> Result<Self> {
        let count = checked_count(alphabet.size(), range + 1, u64::MAX)?;
        let mut table = vec![None; count];
        for entry in entries {
            let word = Word::parse(alphabet, &entry.word, separator)?;
            if word.len() != range + 1 {
                return Err(Error::InvalidPotential(format!(
                    "word `{}` has length {}, expected {}",
                    entry.word,
                    word.len(),
                    range + 1
                )));
            }
            if table[word.code()].replace(entry.value).is_some() {
                return Err(Error::InvalidPotential(format!(
                    "word `{}` listed twice",
                    entry.word
                )));
            }
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(code, v)| {
                v.ok_or_else(|| {
                    let mut letters = vec![0u8; range + 1];
                    decode_word(code, alphabet.size(), &mut letters);
                    let w = Word::new(alphabet, letters).expect("in range");
                    Error::InvalidPotential(format!("missing entry for `{}`", w.render(separator)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, range, table)
    }
}

fn check_weights(alphabet: &Alphabet, weights: &[f64]) -> Result<()> {
    if weights.len() != alphabet.size() {
        return Err(Error::InvalidPotential(format!(
            "{} weights for an alphabet of size {}",
            weights.len(),
            alphabet.size()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidPotential("weights must be positive and finite".into()));
    }
    Ok(())
}

/// JSON form of a locally constant potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialDocument {
    pub alphabet: Vec<String>,
    pub r: usize,
    pub entries: Vec<TableEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub word: String,
    pub value: f64,
}

/// `var_n` of a table: the largest spread among entries sharing their first
/// `n + 1` letters. Prefix classes are contiguous blocks of codes.
pub fn variation(pot: &LocallyConstantPotential, n: usize) -> f64 {
    if n >= pot.range {
        return 0.0;
    }
    let block = pot.alphabet.size().pow((pot.range - n) as u32);
    pot.table
        .chunks(block)
        .map(|chunk| {
            let (lo, hi) = chunk
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// `S_p psi` at the periodic point `w^infinity`, `p = |w|`.
pub fn birkhoff_sum_periodic(pot: &LocallyConstantPotential, w: &[u8]) -> f64 {
    let p = w.len();
    let k = pot.alphabet.size();
    (0..p)
        .map(|start| {
            let code = (0..=pot.range).fold(0usize, |acc, j| acc * k + w[(start + j) % p] as usize);
            pot.table[code]
        })
        .sum()
}

/// `psi - P`, entrywise.
pub fn normalize(pot: &LocallyConstantPotential, pressure: f64) -> Result<LocallyConstantPotential> {
    if !pressure.is_finite() {
        return Err(Error::InvalidArgument(format!("pressure {pressure} is not finite")));
    }
    let mut shifted = LocallyConstantPotential::new(
        &pot.alphabet,
        pot.range,
        pot.table.iter().map(|v| v - pressure).collect(),
    )?;
    shifted.approximation_error = pot.approximation_error;
    Ok(shifted)
}

/// Decay class of the variation sequence, carrying the constants of its
/// closed-form envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecayClass {
    /// `var_n = 0` for `n >= range`.
    LocallyConstant { range: usize },
    /// `var_n <= constant * rate^n`, `rate` in `(0, 1)`.
    Holder { constant: f64, rate: f64 },
    /// `var_n <= constant * exp(-c n^gamma)`, `gamma` in `(0, 1)`.
    Subexponential { constant: f64, c: f64, gamma: f64 },
    /// `var_n <= constant * n^(-q)` for `n >= 1`, `var_0 <= constant`.
    Polynomial { constant: f64, q: f64 },
    /// Summable with no closed-form tail: nothing can be certified past the
    /// explicitly listed values.
    Summable,
}

impl DecayClass {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidPotential(msg.to_string()));
        match *self {
            DecayClass::LocallyConstant { .. } | DecayClass::Summable => Ok(()),
            DecayClass::Holder { constant, rate } => {
                if !(constant >= 0.0 && constant.is_finite()) {
                    bad("holder constant must be finite and nonnegative")
                } else if !(rate > 0.0 && rate < 1.0) {
                    bad("holder rate must lie in (0, 1)")
                } else {
                    Ok(())
                }
            }
            DecayClass::Subexponential { constant, c, gamma } => {
                if !(constant >= 0.0 && constant.is_finite()) {
                    bad("subexponential constant must be finite and nonnegative")
                } else if !(c > 0.0 && c.is_finite()) {
                    bad("subexponential rate c must be positive")
                } else if !(gamma > 0.0 && gamma < 1.0) {
                    bad("subexponential exponent gamma must lie in (0, 1)")
                } else {
                    Ok(())
                }
            }
            DecayClass::Polynomial { constant, q } => {
                if !(constant >= 0.0 && constant.is_finite()) {
                    bad("polynomial constant must be finite and nonnegative")
                } else if !(q > 1.0 && q.is_finite()) {
                    bad("polynomial exponent q must exceed 1 for summability")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Closed-form envelope for `var_n`, `None` when the class has none.
    pub fn envelope(&self, n: usize) -> Option<f64> {
        let x = n as f64;
        match *self {
            DecayClass::LocallyConstant { range } => (n >= range).then_some(0.0),
            DecayClass::Holder { constant, rate } => Some(constant * rate.powf(x)),
            DecayClass::Subexponential { constant, c, gamma } => {
                Some(constant * (-c * x.powf(gamma)).exp())
            }
            DecayClass::Polynomial { constant, q } => Some(constant * x.max(1.0).powf(-q)),
            DecayClass::Summable => None,
        }
    }

    /// Upper bound on `sum_{s >= m} (c0 + c1 s + c2 s^2) var_s` using only the
    /// class envelope. Returns `None` when the series cannot be certified.
    pub fn weighted_tail(&self, m: usize, coeffs: [f64; 3]) -> Option<f64> {
        let [c0, c1, c2] = coeffs;
        match *self {
            DecayClass::LocallyConstant { range } => {
                if m >= range {
                    Some(0.0)
                } else {
                    None
                }
            }
            DecayClass::Holder { constant, rate } => {
                // sum_{s>=m} s^j x^s = x^m sum_{t>=0} (t+m)^j x^t, with
                // sum x^t = 1/(1-x), sum t x^t = x/(1-x)^2,
                // sum t^2 x^t = x(1+x)/(1-x)^3.
                let x = rate;
                let mf = m as f64;
                let t0 = 1.0 / (1.0 - x);
                let t1 = x / (1.0 - x).powi(2);
                let t2 = x * (1.0 + x) / (1.0 - x).powi(3);
                let head = x.powf(mf);
                let s0 = head * t0;
                let s1 = head * (t1 + mf * t0);
                let s2 = head * (t2 + 2.0 * mf * t1 + mf * mf * t0);
                Some(constant * (c0 * s0 + c1 * s1 + c2 * s2))
            }
            DecayClass::Polynomial { constant, q } => {
                // For s >= 1 the summand s^(j-q) is decreasing when j < q, so
                // sum_{s>=m} s^(j-q) <= m^(j-q) + int_m^inf x^(j-q) dx
                // = m^(j-q) + m^(j-q+1) / (q-j-1), finite iff q - j > 1.
                let mut total = 0.0;
                let mut start = m;
                if start == 0 {
                    total += c0 * constant;
                    start = 1;
                }
                let mf = start as f64;
                for (j, &cj) in coeffs.iter().enumerate() {
                    if cj == 0.0 {
                        continue;
                    }
                    let p = q - j as f64;
                    if p <= 1.0 {
                        return None;
                    }
                    total += cj * constant * (mf.powf(-p) + mf.powf(1.0 - p) / (p - 1.0));
                }
                Some(total)
            }
            DecayClass::Subexponential { constant, c, gamma: g } => {
                // f_j(s) = s^j exp(-c s^g) decreases once s^g > j/(c g). Sum
                // explicitly below that threshold K, then use
                // sum_{s>=K} f(s) <= f(K) + int_K^inf f
                // with int_K^inf s^j e^{-c s^g} ds = c^{-(j+1)/g} Gamma((j+1)/g, c K^g) / g.
                let highest = if c2 != 0.0 {
                    2.0
                } else if c1 != 0.0 {
                    1.0
                } else {
                    0.0
                };
                let threshold = (highest / (c * g)).powf(1.0 / g).ceil() as usize + 1;
                let k = threshold.max(m);
                let term = |s: usize| {
                    let x = s as f64;
                    (c0 + c1 * x + c2 * x * x) * (-c * x.powf(g)).exp()
                };
                let explicit: f64 = (m..k).map(term).sum();
                let kf = k as f64;
                let mut tail = term(k);
                for (j, &cj) in coeffs.iter().enumerate() {
                    if cj == 0.0 {
                        continue;
                    }
                    let a = (j as f64 + 1.0) / g;
                    let upper = gamma_ur(a, c * kf.powf(g)) * gamma(a);
                    tail += cj * c.powf(-a) * upper / g;
                }
                Some(constant * (explicit + tail))
            }
            DecayClass::Summable => None,
        }
    }
}

impl fmt::Display for DecayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DecayClass::LocallyConstant { range } => write!(f, "locally-constant(r={range})"),
            DecayClass::Holder { constant, rate } => write!(f, "holder({constant}, {rate})"),
            DecayClass::Subexponential { constant, c, gamma } => {
                write!(f, "subexponential({constant}, {c}, {gamma})")
            }
            DecayClass::Polynomial { constant, q } => write!(f, "polynomial({constant}, {q})"),
            DecayClass::Summable => write!(f, "summable"),
        }
    }
}

pub type Evaluator = Arc<dyn Fn(&[u8]) -> f64 + Send + Sync>;
pub type VariationBound = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// A general potential known through its values on cylinder words and a
/// certified bound on its variations.
///
/// The evaluator receives a finite word `w` and returns `psi` at the periodic
/// point `w^infinity`.
#[derive(Clone)]
pub struct VariationBoundedPotential {
    alphabet: Alphabet,
    evaluator: Evaluator,
    var_bound: VariationBound,
    decay_class: DecayClass,
}

/// Number of leading `var_bound` values checked against the class envelope.
const VAR_BOUND_CHECK_HORIZON: usize = 64;

impl VariationBoundedPotential {
    /// Uses the class envelope as `var_bound`.
    pub fn new(alphabet: &Alphabet, evaluator: Evaluator, decay_class: DecayClass) -> Result<Self> {
        decay_class.validate()?;
        if decay_class == DecayClass::Summable {
            return Err(Error::InvalidPotential(
                "a summable class needs an explicit variation bound".into(),
            ));
        }
        let class = decay_class;
        let var_bound: VariationBound =
            Arc::new(move |n| class.envelope(n).unwrap_or(f64::INFINITY));
        Self::with_var_bound(alphabet, evaluator, decay_class, var_bound)
    }

    /// Uses a caller-supplied `var_bound`, which must be nonincreasing and,
    /// where the class has an envelope, lie below it.
    pub fn with_var_bound(
        alphabet: &Alphabet,
        evaluator: Evaluator,
        decay_class: DecayClass,
        var_bound: VariationBound,
    ) -> Result<Self> {
        decay_class.validate()?;
        let mut previous = f64::INFINITY;
        for n in 0..=VAR_BOUND_CHECK_HORIZON {
            let v = var_bound(n);
            if !(v >= 0.0) || v > previous {
                return Err(Error::InvalidPotential(format!(
                    "var_bound must be nonnegative and nonincreasing (n = {n}: {v})"
                )));
            }
            if let Some(env) = decay_class.envelope(n) {
                if v > env * (1.0 + 1e-12) {
                    return Err(Error::InvalidPotential(format!(
                        "var_bound({n}) = {v} exceeds the {decay_class} envelope {env}"
                    )));
                }
            }
            previous = v;
        }
        Ok(Self {
            alphabet: alphabet.clone(),
            evaluator,
            var_bound,
            decay_class,
        })
    }

    /// `psi(a) = sum_k ratio^k f(a_k)`, with `var_n = spread(f) ratio^(n+1) / (1 - ratio)`.
    pub fn geometric_tail(alphabet: &Alphabet, f: &[f64], ratio: f64) -> Result<Self> {
        if f.len() != alphabet.size() || f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential(format!(
                "geometric tail needs {} finite symbol values",
                alphabet.size()
            )));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidPotential("ratio must lie in (0, 1)".into()));
        }
        let spread = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - f.iter().cloned().fold(f64::INFINITY, f64::min);
        let values = f.to_vec();
        let evaluator: Evaluator = Arc::new(move |w: &[u8]| {
            // Periodic point w^infinity: the geometric series folds over one period.
            let p = w.len() as i32;
            let (sum, _) = w.iter().fold((0.0, 1.0), |(acc, weight), &a| {
                (acc + weight * values[a as usize], weight * ratio)
            });
            sum / (1.0 - ratio.powi(p))
        });
        let class = DecayClass::Holder {
            constant: spread * ratio / (1.0 - ratio),
            rate: ratio,
        };
        Self::new(alphabet, evaluator, class)
    }

    /// A locally constant potential seen as a general one.
    pub fn from_locally_constant(pot: &LocallyConstantPotential) -> Result<Self> {
        let table = pot.clone();
        let r = pot.range();
        let evaluator: Evaluator = Arc::new(move |w: &[u8]| {
            let ext: Vec<u8> = (0..=r).map(|i| w[i % w.len()]).collect();
            table.value(&ext)
        });
        let profile = pot.variation_profile(r);
        let values = profile.values().to_vec();
        let var_bound: VariationBound = Arc::new(move |n| values.get(n).copied().unwrap_or(0.0));
        Self::with_var_bound(
            pot.alphabet(),
            evaluator,
            DecayClass::LocallyConstant { range: r },
            var_bound,
        )
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn decay_class(&self) -> DecayClass {
        self.decay_class
    }

    pub fn evaluate(&self, w: &[u8]) -> f64 {
        (self.evaluator)(w)
    }

    pub fn var_bound(&self, n: usize) -> f64 {
        (self.var_bound)(n)
    }

    /// Certified bound on `||psi||`: the largest `|psi|` over periodic points of
    /// words in `A^{r+1}`, plus `var_bound(r)`.
    pub fn sup_norm_bound(&self, r: usize, cap: u64) -> Result<f64> {
        let k = self.alphabet.size();
        let count = checked_count(k, r + 1, cap)?;
        let mut letters = vec![0u8; r + 1];
        let mut sup = 0.0f64;
        for code in 0..count {
            decode_word(code, k, &mut letters);
            sup = sup.max(self.evaluate(&letters).abs());
        }
        Ok(sup + self.var_bound(r))
    }

    /// `var_bound(0..=horizon)` plus a closed-form tail for `s_psi`.
    pub fn variation_profile(&self, horizon: usize) -> Result<VariationProfile> {
        let values = (0..=horizon).map(|n| self.var_bound(n)).collect();
        VariationProfile::new(values, self.decay_class)
    }
}

impl fmt::Debug for VariationBoundedPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VariationBoundedPotential")
            .field("alphabet", &self.alphabet)
            .field("decay_class", &self.decay_class)
            .finish_non_exhaustive()
    }
}

/// The `(r+1)`-symbol approximant: the table value on `w` is `psi` at the
/// periodic point `w^infinity`, so `||psi - psi_r|| <= var_r psi`.
pub fn approximant(
    psi: &VariationBoundedPotential,
    r: usize,
    cap: u64,
) -> Result<LocallyConstantPotential> {
    checked_count(psi.alphabet.size(), r + 1, cap)?;
    let mut pot = LocallyConstantPotential::from_fn(&psi.alphabet, r, |w| psi.evaluate(w))?;
    pot.approximation_error = Some(psi.var_bound(r));
    Ok(pot)
}

/// Variations `var_0..=var_N`, their certified sum `s_psi` and
/// `theta = 1 - exp(-s_psi)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationProfile {
    values: Vec<f64>,
    class: DecayClass,
    s_psi: f64,
    theta: f64,
}

impl VariationProfile {
    pub fn new(values: Vec<f64>, class: DecayClass) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("profile needs var_0".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("variation {v} is not a finite nonnegative value")));
        }
        let head: f64 = values.iter().sum();
        let tail = class.weighted_tail(values.len(), [1.0, 0.0, 0.0]).ok_or_else(|| {
            Error::Certification(format!(
                "the {class} class has no closed-form tail beyond n = {}",
                values.len() - 1
            ))
        })?;
        let s_psi = head + tail;
        Ok(Self {
            values,
            class,
            s_psi,
            theta: -(-s_psi).exp_m1(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn class(&self) -> DecayClass {
        self.class
    }

    pub fn s_psi(&self) -> f64 {
        self.s_psi
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `var_s`, from the listed values or else the class envelope.
    pub fn var(&self, s: usize) -> f64 {
        match self.values.get(s) {
            Some(&v) => v,
            None => self.class.envelope(s).unwrap_or(f64::INFINITY),
        }
    }

    /// Upper bound on `sum_{s >= m} (c0 + c1 s + c2 s^2) var_s`.
    pub fn weighted_tail(&self, m: usize, coeffs: [f64; 3]) -> Result<f64> {
        let [c0, c1, c2] = coeffs;
        let split = self.values.len().max(m);
        let head: f64 = (m..self.values.len())
            .map(|s| {
                let x = s as f64;
                (c0 + c1 * x + c2 * x * x) * self.values[s]
            })
            .sum();
        let tail = self.class.weighted_tail(split, coeffs).ok_or_else(|| {
            Error::Certification(format!("no closed-form tail for the {} class", self.class))
        })?;
        Ok(head + tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{enumerate_words, DEFAULT_ENUMERATION_CAP};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binary() -> Alphabet {
        Alphabet::numeric(2).unwrap()
    }

    #[test]
    fn first_letter_table_variations() {
        // var_n compares points agreeing on a_0..a_n, so a table that only
        // reads a_0 has no variation at all
        let pot = LocallyConstantPotential::new(&binary(), 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(variation(&pot, 0), 0.0);
        assert_eq!(variation(&pot, 1), 0.0);
        // reading a_1 instead gives var_0 = 1
        let pot = LocallyConstantPotential::new(&binary(), 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(variation(&pot, 0), 1.0);
        assert_eq!(variation(&pot, 1), 0.0);
        assert_eq!(variation(&pot, 7), 0.0);
    }

    #[test]
    fn constant_table_has_no_variation() {
        let pot = LocallyConstantPotential::constant(&Alphabet::numeric(3).unwrap(), 2, 0.7).unwrap();
        for n in 0..5 {
            assert_eq!(variation(&pot, n), 0.0);
        }
        let profile = pot.variation_profile(4);
        assert_eq!(profile.s_psi(), 0.0);
        assert_eq!(profile.theta(), 0.0);
    }

    #[test]
    fn random_table_variation_matches_pairwise_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = binary();
        let pot = LocallyConstantPotential::from_fn(&a, 2, |_| rng.random_range(-2.0..2.0)).unwrap();
        let words = enumerate_words(&a, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        for n in 0..=3 {
            let mut brute = 0.0f64;
            for u in &words {
                for v in &words {
                    if u.letters()[..=n.min(2)] == v.letters()[..=n.min(2)] {
                        brute = brute.max((pot.value(u.letters()) - pot.value(v.letters())).abs());
                    }
                }
            }
            assert_eq!(variation(&pot, n), brute, "n = {n}");
        }
    }

    #[test]
    fn birkhoff_sums() {
        let a = binary();
        let c = LocallyConstantPotential::constant(&a, 1, 1.25).unwrap();
        assert_abs_diff_eq!(birkhoff_sum_periodic(&c, &[0, 1, 1, 0, 1]), 5.0 * 1.25);

        let half = LocallyConstantPotential::constant(&a, 1, 0.5f64.ln()).unwrap();
        assert_abs_diff_eq!(
            birkhoff_sum_periodic(&half, &[1, 1, 0, 1]),
            4.0 * 0.5f64.ln(),
            epsilon = 1e-15
        );

        // windows 01 and 10 (cyclic)
        let pot = LocallyConstantPotential::new(&a, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(birkhoff_sum_periodic(&pot, &[0, 1]), 3.0);
    }

    #[test]
    fn one_term_profile() {
        let pot = LocallyConstantPotential::new(&binary(), 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let profile = pot.variation_profile(5);
        assert_eq!(profile.s_psi(), 1.0);
        assert_abs_diff_eq!(profile.theta(), 0.632_120_558_828_557_7, epsilon = 1e-15);
    }

    #[test]
    fn holder_profile_tail_against_partial_sums() {
        let class = DecayClass::Holder { constant: 1.0, rate: 0.5 };
        let eval: Evaluator = Arc::new(|_| 0.0);
        let psi = VariationBoundedPotential::new(&binary(), eval, class).unwrap();
        let profile = psi.variation_profile(10).unwrap();
        let head: f64 = (0..=10).map(|k| 0.5f64.powi(k)).sum();
        // geometric tail sum_{k>10} 2^-k = 2^-10
        assert_abs_diff_eq!(profile.s_psi(), head + 2f64.powi(-10), epsilon = 1e-14);
        let long: f64 = (0..200).map(|k| 0.5f64.powi(k)).sum();
        assert!(profile.s_psi() >= long - 1e-14);
        assert_abs_diff_eq!(profile.s_psi(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn class_tails_dominate_partial_sums() {
        let classes = [
            DecayClass::Holder { constant: 1.3, rate: 0.7 },
            DecayClass::Subexponential { constant: 2.0, c: 0.8, gamma: 0.5 },
            DecayClass::Polynomial { constant: 1.0, q: 4.5 },
        ];
        let coeffs = [5.0, 3.0, 1.0];
        for class in classes {
            for m in [0usize, 1, 3, 10, 40] {
                let bound = class.weighted_tail(m, coeffs).unwrap();
                let partial: f64 = (m..m + 20_000)
                    .map(|s| {
                        let x = s as f64;
                        (coeffs[0] + coeffs[1] * x + coeffs[2] * x * x) * class.envelope(s).unwrap()
                    })
                    .sum();
                assert!(bound >= partial * (1.0 - 1e-12), "{class} m={m}: {bound} < {partial}");
                assert!(bound <= partial * 3.0 + 1e-9, "{class} m={m}: {bound} too loose vs {partial}");
            }
        }
    }

    #[test]
    fn slow_polynomial_tails_are_not_certifiable() {
        let class = DecayClass::Polynomial { constant: 1.0, q: 2.5 };
        assert!(class.weighted_tail(3, [1.0, 0.0, 0.0]).is_some());
        assert!(class.weighted_tail(3, [1.0, 3.0, 1.0]).is_none());
        assert!(DecayClass::Summable.weighted_tail(0, [1.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn summable_class_needs_explicit_bound() {
        let eval: Evaluator = Arc::new(|_| 0.0);
        assert!(VariationBoundedPotential::new(&binary(), eval.clone(), DecayClass::Summable).is_err());
        let vb: VariationBound = Arc::new(|n| 1.0 / ((n + 1) * (n + 1)) as f64);
        let psi =
            VariationBoundedPotential::with_var_bound(&binary(), eval, DecayClass::Summable, vb).unwrap();
        assert!(matches!(psi.variation_profile(10), Err(Error::Certification(_))));
    }

    #[test]
    fn var_bound_must_respect_class() {
        let eval: Evaluator = Arc::new(|_| 0.0);
        let class = DecayClass::Holder { constant: 1.0, rate: 0.5 };
        let too_big: VariationBound = Arc::new(|n| 0.6f64.powi(n as i32));
        assert!(VariationBoundedPotential::with_var_bound(&binary(), eval.clone(), class, too_big).is_err());
        let increasing: VariationBound = Arc::new(|n| if n == 3 { 0.2 } else { 0.0 });
        assert!(VariationBoundedPotential::with_var_bound(&binary(), eval, class, increasing).is_err());
    }

    #[test]
    fn approximant_of_locally_constant_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Alphabet::numeric(3).unwrap();
        let pot = LocallyConstantPotential::from_fn(&a, 2, |_| rng.random_range(-1.0..1.0)).unwrap();
        let psi = VariationBoundedPotential::from_locally_constant(&pot).unwrap();
        let approx = approximant(&psi, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(approx.table(), pot.table());
        assert_eq!(approx.approximation_error(), Some(0.0));
        let lifted = approximant(&psi, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(lifted.table(), pot.with_range(3).unwrap().table());
    }

    #[test]
    fn approximant_of_constant() {
        let eval: Evaluator = Arc::new(|_| -0.3);
        let psi = VariationBoundedPotential::new(
            &binary(),
            eval,
            DecayClass::Holder { constant: 0.0, rate: 0.5 },
        )
        .unwrap();
        for r in 1..5 {
            let t = approximant(&psi, r, DEFAULT_ENUMERATION_CAP).unwrap();
            assert!(t.table().iter().all(|&v| v == -0.3));
        }
    }

    #[test]
    fn geometric_tail_approximant_error_exhaustive() {
        let a = binary();
        let psi = VariationBoundedPotential::geometric_tail(&a, &[0.0, 1.0], 0.5).unwrap();
        for r in 1..=5 {
            let approx = approximant(&psi, r, DEFAULT_ENUMERATION_CAP).unwrap();
            let bound = psi.var_bound(r);
            assert!(bound <= 2f64.powi(1 - r as i32));
            for k in 0..=3 {
                for w in enumerate_words(&a, r + 1 + k, DEFAULT_ENUMERATION_CAP).unwrap() {
                    // the truncated geometric sum with periodic tail, computed directly
                    let p = w.len();
                    let direct: f64 = (0..400).map(|i| 0.5f64.powi(i) * w.letters()[i as usize % p] as f64).sum();
                    assert_abs_diff_eq!(psi.evaluate(w.letters()), direct, epsilon = 1e-12);
                    let diff = (direct - approx.value(w.letters())).abs();
                    assert!(diff <= bound + 1e-12, "r={r} w={w}: {diff} > {bound}");
                }
            }
        }
    }

    #[test]
    fn normalize_shifts_entries() {
        let a = binary();
        let zero = LocallyConstantPotential::constant(&a, 1, 0.0).unwrap();
        let same = normalize(&zero, 0.0).unwrap();
        assert_eq!(same.table(), zero.table());
        let shifted = normalize(&zero, 2f64.ln()).unwrap();
        assert!(shifted.table().iter().all(|&v| v == -(2f64.ln())));
        assert!(normalize(&zero, f64::NAN).is_err());
    }

    #[test]
    fn document_roundtrip_and_errors() {
        let a = Alphabet::numeric(3).unwrap();
        let pot = LocallyConstantPotential::from_fn(&a, 1, |w| w[0] as f64 - 0.5 * w[1] as f64).unwrap();
        let doc = pot.to_document("");
        let json = serde_json::to_string(&doc).unwrap();
        let back: PotentialDocument = serde_json::from_str(&json).unwrap();
        let pot2 = LocallyConstantPotential::from_document(&back, "").unwrap();
        assert_eq!(pot2.table(), pot.table());

        let mut missing = doc.clone();
        missing.entries.pop();
        let err = LocallyConstantPotential::from_document(&missing, "").unwrap_err();
        assert_eq!(err, Error::InvalidPotential("missing entry for `22`".into()));
    }

    #[test]
    fn table_validation() {
        let a = binary();
        assert!(LocallyConstantPotential::new(&a, 0, vec![0.0, 0.0]).is_err());
        assert!(LocallyConstantPotential::new(&a, 1, vec![0.0; 3]).is_err());
        assert!(LocallyConstantPotential::new(&a, 1, vec![0.0, f64::INFINITY, 0.0, 0.0]).is_err());
    }
}
