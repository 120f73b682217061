//! Closed-form error budgets: the approximation budget `eps_{r,n}`, the
//! constants `C0, C1, C, D1, D, D0`, periodic-approximation envelopes and
//! decay certificates for the induced potential.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::TransferMatrix;
use crate::potentials::{DecayClass, VariationProfile};
use crate::projective::{hilbert_distance, tau_of};

/// `sum_{s >= r} s theta^s = theta^r (r (1 - theta) + theta) / (1 - theta)^2`.
pub fn geometric_moment_tail(theta: f64, r: usize) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    let rf = r as f64;
    theta.powf(rf) * (rf * (1.0 - theta) + theta) / (1.0 - theta).powi(2)
}

/// The constants of the convergence estimates for a potential with
/// `Card(A) = card`, sup-norm bound `sup_norm` and variation profile `profile`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constants {
    pub card: usize,
    pub sup_norm: f64,
    pub s_psi: f64,
    pub theta: f64,
    /// `2 (log Card(A) + ||psi||)`.
    pub c0: f64,
    /// `4 C0 (1 + e^{s} theta) / (theta^2 (1 - theta))`; infinite when `theta = 0`.
    pub c1: f64,
    /// `2 C1`.
    pub c: f64,
    /// `4 (log Card(A) + s_psi + ||psi||)`.
    pub d1: f64,
    /// `max(2, 2 e^{s} D1)`.
    pub d: f64,
}

impl Constants {
    pub fn new(card: usize, sup_norm: f64, profile: &VariationProfile) -> Self {
        let (s, theta) = (profile.s_psi(), profile.theta());
        let log_a = (card as f64).ln();
        let c0 = 2.0 * (log_a + sup_norm);
        let c1 = 4.0 * c0 * (1.0 + s.exp() * theta) / (theta * theta * (1.0 - theta));
        let d1 = 4.0 * (log_a + s + sup_norm);
        Self {
            card,
            sup_norm,
            s_psi: s,
            theta,
            c0,
            c1,
            c: 2.0 * c1,
            d1,
            d: (2.0 * s.exp() * d1).max(2.0),
        }
    }

    /// `K r^2 theta^{n/r}` with `K = factor * C0 (1 + e^s theta) / (theta^2 (1 - theta))`,
    /// rearranged as `factor C0 (1 + e^s theta) r^2 theta^{n/r - 2} / (1 - theta)`
    /// so that `theta = 0` is handled.
    fn scaled_power(&self, factor: f64, r: usize, exponent: f64) -> f64 {
        let rf = r as f64;
        factor * self.c0 * (1.0 + self.s_psi.exp() * self.theta) * rf * rf
            * self.theta.powf(exponent - 2.0)
            / (1.0 - self.theta)
    }

    /// `C1 r^2 theta^{n/r}`.
    pub fn c1_bound(&self, r: usize, n: usize) -> f64 {
        self.scaled_power(4.0, r, n as f64 / r as f64)
    }

    /// `C r^2 theta^{n/r}`, the a-priori bar on `|phi_r - log(nu_r[b_0^n]/nu_r[b_1^n])|`.
    pub fn induced_bar(&self, r: usize, n: usize) -> f64 {
        self.scaled_power(8.0, r, n as f64 / r as f64)
    }

    /// The explicit convergence estimate for tail vectors,
    /// `2 r (r+1) C0 (e^s theta^r + 1) theta^k (theta^k + 1/(1-theta))`,
    /// `k = floor(n/r) - 1`, which never exceeds `C1 r^2 theta^{n/r}`.
    pub fn tail_vector_bound(&self, r: usize, n: usize) -> f64 {
        if n <= r {
            return f64::INFINITY;
        }
        let (rf, t) = (r as f64, self.theta);
        let k = (n / r - 1) as i32;
        let tk = t.powi(k);
        let explicit = 2.0 * rf * (rf + 1.0) * self.c0 * (self.s_psi.exp() * t.powi(r as i32) + 1.0)
            * tk
            * (tk + 1.0 / (1.0 - t));
        explicit.min(self.c1_bound(r, n))
    }

    /// Periodic-approximation envelope `D1 r e^s theta^{(p - max(n,r))/r - 2}`
    /// (log scale) for `w` of length `n`.
    pub fn periodic_envelope_d1(&self, r: usize, n: usize, p: usize) -> f64 {
        let exponent = (p as f64 - n.max(r) as f64) / r as f64 - 2.0;
        self.d1 * r as f64 * self.s_psi.exp() * self.theta.powf(exponent)
    }
}

/// `D0 = 2 max_zeta delta(M^r e_zeta, M^{r+1} e_zeta)` and `tau(M^r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodicConstants {
    pub d0: f64,
    pub tau: f64,
}

pub fn periodic_constants(transfer: &TransferMatrix) -> Result<PeriodicConstants> {
    let r = transfer.range();
    let mr = transfer.matrix().pow(r)?;
    let mr1 = mr.matmul(transfer.matrix())?;
    let dim = transfer.dim();
    let mut d0 = 0.0f64;
    for z in 0..dim {
        let a: Vec<f64> = (0..dim).map(|i| mr.mantissa(i, z)).collect();
        let b: Vec<f64> = (0..dim).map(|i| mr1.mantissa(i, z)).collect();
        d0 = d0.max(hilbert_distance(&a, &b));
    }
    Ok(PeriodicConstants {
        d0: 2.0 * d0,
        tau: tau_of(&mr),
    })
}

impl PeriodicConstants {
    /// `r D0 / (1 - tau) tau^{(p - max(n,r))/r - 2}` (log scale).
    pub fn envelope(&self, r: usize, n: usize, p: usize) -> f64 {
        let exponent = (p as f64 - n.max(r) as f64) / r as f64 - 2.0;
        r as f64 * self.d0 / (1.0 - self.tau) * self.tau.powf(exponent)
    }
}

/// `|log P_r^(p)[w] - log mu_r[w]|` is at most the smaller of the D0 and D1
/// envelopes.
pub fn periodic_envelope(
    constants: &Constants,
    periodic: &PeriodicConstants,
    r: usize,
    n: usize,
    p: usize,
) -> f64 {
    constants
        .periodic_envelope_d1(r, n, p)
        .min(periodic.envelope(r, n, p))
}

/// `eps_{r,n} = D sum_{s >= r} ((n + (s+1)(s+2)) var_s + s theta^s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub r: usize,
    pub n: usize,
    pub epsilon: f64,
    pub d: f64,
    pub d1: f64,
    pub theta: f64,
    /// `sum_{s >= r} (n + (s+1)(s+2)) var_s`.
    pub variation_terms: f64,
    /// `sum_{s >= r} s theta^s`.
    pub geometric_terms: f64,
}

impl ErrorBudget {
    /// The evaluated series `sum_{s >= r} [(n + (s+1)(s+2)) var_s + s theta^s]`.
    pub fn tail_terms(&self) -> f64 {
        self.variation_terms + self.geometric_terms
    }
}

pub fn epsilon_budget(
    profile: &VariationProfile,
    r: usize,
    n: usize,
    d1: f64,
    d: f64,
) -> Result<ErrorBudget> {
    let theta = profile.theta();
    if !(theta < 1.0) {
        return Err(Error::Certification(format!("theta = {theta} is not below 1")));
    }
    // (n + (s+1)(s+2)) = (n + 2) + 3 s + s^2
    let variation_terms = profile.weighted_tail(r, [n as f64 + 2.0, 3.0, 1.0])?;
    let geometric_terms = geometric_moment_tail(theta, r);
    Ok(ErrorBudget {
        r,
        n,
        epsilon: d * (variation_terms + geometric_terms),
        d,
        d1,
        theta,
        variation_terms,
        geometric_terms,
    })
}

/// `var_r psi`: `|log rho_r - P(psi)| <= var_r psi`.
pub fn pressure_gap_bound(profile: &VariationProfile, r: usize) -> f64 {
    profile.var(r)
}

/// Schedule `n(r) = ceil(r^{1 + delta})`, never below `r + 1`.
pub fn schedule_n(r: usize, delta: f64) -> usize {
    let n = (r as f64).powf(1.0 + delta).ceil() as usize;
    n.max(r + 1)
}

/// Horizon of the numerical monotonicity scan behind [`r_star`].
pub const R_STAR_HORIZON: usize = 256;

/// Least `r*` such that `s -> s^2 theta^{n(s)/s}` and `s -> eps_{s,n(s)}` are
/// nonincreasing on `[r*, horizon]`, and `r*` lies past the analytic turning
/// point `s^delta = 2 / (delta (-log theta))` of the first map.
pub fn r_star(profile: &VariationProfile, constants: &Constants, delta: f64) -> Result<usize> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("schedule delta must be positive, got {delta}")));
    }
    let theta = constants.theta;
    let analytic = if theta == 0.0 {
        1
    } else {
        (2.0 / (delta * -theta.ln())).powf(1.0 / delta).ceil().max(1.0) as usize
    };
    let h = |s: usize| {
        let sf = s as f64;
        sf * sf * theta.powf(schedule_n(s, delta) as f64 / sf)
    };
    let eps = |s: usize| -> Result<f64> {
        Ok(epsilon_budget(profile, s, schedule_n(s, delta), constants.d1, constants.d)?.epsilon)
    };
    let mut values = Vec::with_capacity(R_STAR_HORIZON);
    for s in 1..=R_STAR_HORIZON {
        values.push((h(s), eps(s)?));
    }
    // walk down from the horizon while both sequences keep decreasing
    let mut start = R_STAR_HORIZON;
    while start > 1 {
        let (h_prev, e_prev) = values[start - 2];
        let (h_here, e_here) = values[start - 1];
        if h_prev >= h_here && e_prev >= e_here {
            start -= 1;
        } else {
            break;
        }
    }
    Ok(start.max(analytic))
}

/// Shape of a decay envelope for `var_n phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecayForm {
    /// `K rate^n`.
    Exponential { rate: f64 },
    /// `K exp(-c n^exponent)`.
    Stretched { c: f64, exponent: f64 },
    /// `K n^{-exponent}`.
    Polynomial { exponent: f64 },
}

/// Decay envelope for the induced potential. The leading constant is a
/// diagnostic fitted to computed bounds, see [`DecayCertificate::fit_constant`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub form: DecayForm,
    pub constant: Option<f64>,
}

impl DecayCertificate {
    /// `g(n)` without the constant.
    pub fn shape(&self, n: usize) -> f64 {
        let x = n as f64;
        match self.form {
            DecayForm::Exponential { rate } => rate.powf(x),
            DecayForm::Stretched { c, exponent } => (-c * x.powf(exponent)).exp(),
            DecayForm::Polynomial { exponent } => x.max(1.0).powf(-exponent),
        }
    }

    pub fn envelope(&self, n: usize) -> Option<f64> {
        self.constant.map(|k| k * self.shape(n))
    }

    /// Smallest `K` with `K g(n) >= bound` over the given `(n, bound)` pairs.
    pub fn fit_constant(mut self, samples: &[(usize, f64)]) -> Self {
        let k = samples
            .iter()
            .filter(|(_, b)| b.is_finite())
            .map(|&(n, b)| b / self.shape(n))
            .fold(0.0f64, f64::max);
        self.constant = Some(k);
        self
    }

    pub fn exponent(&self) -> f64 {
        match self.form {
            DecayForm::Exponential { .. } => 1.0,
            DecayForm::Stretched { exponent, .. } => exponent,
            DecayForm::Polynomial { exponent } => exponent,
        }
    }
}

impl fmt::Display for DecayCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.constant.map_or("K".to_string(), |k| format!("{k:e}"));
        match self.form {
            DecayForm::Exponential { rate } => write!(f, "{k} * {rate}^n"),
            DecayForm::Stretched { c, exponent } => write!(f, "{k} * exp(-{c} n^{exponent})"),
            DecayForm::Polynomial { exponent } => write!(f, "{k} * n^-{exponent}"),
        }
    }
}

/// Envelope shape for `var_n phi` given the decay class of `psi`.
///
/// * locally constant of range `r`: `theta^{n/r}` (pass `theta` of `psi`);
/// * Holder: `exp(-c n^{delta/(1+delta)})` with `c = -log varrho`,
///   `varrho = (1 + max(theta, rate)) / 2`;
/// * subexponential(`gamma`): `exp(-d n^{gamma/(1+gamma)})`, `d = min(c, -log theta)/2`;
/// * polynomial(`q > 3`): `n^{-(q - 2 - epsilon)}`, `epsilon` in `(0, q - 3)`.
pub fn decay_certificate(
    class: &DecayClass,
    theta: f64,
    delta: f64,
    epsilon: f64,
) -> Result<DecayCertificate> {
    class.validate()?;
    let form = match *class {
        DecayClass::LocallyConstant { range } => DecayForm::Exponential {
            rate: theta.powf(1.0 / range as f64),
        },
        DecayClass::Holder { rate, .. } => {
            if !(delta > 0.0) {
                return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
            }
            let varrho = (1.0 + theta.max(rate)) / 2.0;
            DecayForm::Stretched {
                c: -varrho.ln(),
                exponent: delta / (1.0 + delta),
            }
        }
        DecayClass::Subexponential { c, gamma, .. } => {
            let theta_rate = if theta > 0.0 { -theta.ln() } else { f64::INFINITY };
            DecayForm::Stretched {
                c: c.min(theta_rate) / 2.0,
                exponent: gamma / (1.0 + gamma),
            }
        }
        DecayClass::Polynomial { q, .. } => {
            if q <= 3.0 {
                return Err(Error::Certification(format!(
                    "polynomial decay with q = {q} <= 3 admits no certificate for the induced potential"
                )));
            }
            if !(epsilon > 0.0 && epsilon < q - 3.0) {
                return Err(Error::InvalidArgument(format!(
                    "slack epsilon must lie in (0, {}), got {epsilon}",
                    q - 3.0
                )));
            }
            DecayForm::Polynomial {
                exponent: q - 2.0 - epsilon,
            }
        }
        DecayClass::Summable => {
            return Err(Error::Certification(
                "a summable class without closed-form tail admits no certificate".into(),
            ))
        }
    };
    Ok(DecayCertificate {
        form,
        constant: None,
    })
}
