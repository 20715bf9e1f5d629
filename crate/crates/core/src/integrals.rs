//! Iterated integrals of the form
//!
//! ```text
//! I_j = ∫_{s0}^T (s1−s0)^-β ϱ(s0,s1)^-γ ∫_{s1}^T … ∫_{s_{j−1}}^T (s_j−s_{j−1})^-β ϱ(s_{j−1},s_j)^-γ ds_j … ds_1
//! ```
//!
//! with `ϱ(t, s) = ρ((s−t)/(T−t)) / (T−t)` and `ρ(r) = (1−α) r^-α`. Note that
//! `α` here is the exponent of the *density* of the time fraction, so a time
//! CDF `P(r ≤ b) = b^e` corresponds to `α = 1 − e`.
//!
//! With `κ = 1+γ−β` and `a = αγ−β`,
//!
//! ```text
//! I_j = [(T−s0)^κ Γ(a+1) / (1−α)^γ]^j · Π_{i<j} Γ(iκ+1) / Γ(a+iκ+2)
//! ```
//!
//! and each product factor equals `∫₀¹ (1−s)^{iκ} s^a ds / (1−α)^γ`, which
//! [`iterated_integral_quadrature`] evaluates independently.

use libm::{lgamma as ln_gamma, tgamma as gamma};
use thiserror::Error;

use crate::quadrature::{integrate, QuadratureError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegralError {
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("integral diverges: need β < αγ + 1, got β = {beta}, αγ + 1 = {limit}")]
    NonIntegrable { beta: f64, limit: f64 },
    #[error("quadrature did not reach tolerance: {0}")]
    ToleranceNotMet(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IteratedIntegralSpec {
    /// Density exponent, `ρ(r) = (1−α) r^-α`.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub s0: f64,
    /// Number of nested integrals.
    pub j: u32,
}

impl IteratedIntegralSpec {
    pub fn new(j: u32, alpha: f64, beta: f64, gamma: f64, horizon: f64, s0: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            horizon,
            s0,
            j,
        }
    }

    /// `T − s0`.
    pub fn gap(&self) -> f64 {
        self.horizon - self.s0
    }

    pub fn kappa(&self) -> f64 {
        1.0 + self.gamma - self.beta
    }

    pub fn a(&self) -> f64 {
        self.alpha * self.gamma - self.beta
    }

    fn check(&self) -> Result<(), IntegralError> {
        let bad = |m: String| Err(IntegralError::HypothesisViolated(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("α = {} not in (0, 1)", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("γ = {} not in (0, ∞)", self.gamma));
        }
        if !(self.horizon.is_finite() && self.s0 >= 0.0 && self.s0 < self.horizon) {
            return bad(format!("need 0 ≤ s0 < T, got s0 = {}, T = {}", self.s0, self.horizon));
        }
        if !self.beta.is_finite() {
            return bad(format!("β = {} not finite", self.beta));
        }
        let limit = self.alpha * self.gamma + 1.0;
        if self.beta >= limit {
            return Err(IntegralError::NonIntegrable { beta: self.beta, limit });
        }
        Ok(())
    }
}

/// `I_j` from the gamma-function closed form.
pub fn iterated_integral_closed(spec: &IteratedIntegralSpec) -> Result<f64, IntegralError> {
    spec.check()?;
    Ok(ln_closed_form(spec).exp())
}

/// `ln I_j`; useful when `I_j` under- or overflows.
pub fn ln_closed_form(spec: &IteratedIntegralSpec) -> f64 {
    let (k, a) = (spec.kappa(), spec.a());
    let j = spec.j as f64;
    let mut ln = j * (k * spec.gap().ln() + ln_gamma(a + 1.0) - spec.gamma * (1.0 - spec.alpha).ln());
    for i in 0..spec.j {
        let ik = i as f64 * k;
        ln += ln_gamma(ik + 1.0) - ln_gamma(a + ik + 2.0);
    }
    ln
}

/// `I_j` as a product of one-dimensional adaptive quadratures. Each factor is
/// solved to relative tolerance `rel_tol / (2j)` so the product meets
/// `rel_tol`.
pub fn iterated_integral_quadrature(spec: &IteratedIntegralSpec, rel_tol: f64) -> Result<f64, IntegralError> {
    spec.check()?;
    if spec.j == 0 {
        return Ok(1.0);
    }
    let (k, a) = (spec.kappa(), spec.a());
    let factor_tol = rel_tol / (2.0 * spec.j as f64);
    let norm = (1.0 - spec.alpha).powf(-spec.gamma);
    let integer_a = a >= 0.0 && a.fract() == 0.0;
    let mut product = spec.gap().powf(k * spec.j as f64);
    for i in 0..spec.j {
        let ik = i as f64 * k;
        let q = if integer_a {
            integrate(|s| (1.0 - s).powf(ik) * s.powf(a), 0.0, 1.0, 0.0, factor_tol, 4000)?
        } else {
            // s = u^{1/(a+1)} removes the s^a endpoint singularity.
            let inv = 1.0 / (a + 1.0);
            integrate(|u| (1.0 - u.powf(inv)).powf(ik) * inv, 0.0, 1.0, 0.0, factor_tol, 4000)?
        };
        product *= q.value * norm;
    }
    Ok(product)
}

/// Gamma-ratio upper bound on `I_j`, valid for `β ∈ [αγ, αγ+1]`.
pub fn iterated_integral_upper_bound(spec: &IteratedIntegralSpec) -> Result<f64, IntegralError> {
    spec.check()?;
    let ag = spec.alpha * spec.gamma;
    if spec.beta < ag {
        return Err(IntegralError::HypothesisViolated(format!(
            "β = {} below αγ = {ag}",
            spec.beta
        )));
    }
    if spec.j == 0 {
        return Ok(1.0);
    }
    let (k, a) = (spec.kappa(), spec.a());
    let j = spec.j as f64;
    let ln = j * (k * spec.gap().ln() + ln_gamma(a + 1.0) - spec.gamma * (1.0 - spec.alpha).ln() - (a + 1.0) * k.ln())
        + (spec.beta - ag) * (a + 1.0) / k * (k + (k * (j - 1.0) + 1.0).ln())
        + (a + 1.0) * (ln_gamma(1.0 / k) - ln_gamma(j + 1.0 / k));
    Ok(ln.exp())
}

/// Jensen lower bound on the `(j+1)`-fold integral with `β = γ = 1`, valid for
/// every density: `(π (T−s0))^(j+1) / Γ((j+3)/2)²`.
pub fn iterated_integral_lower_bound(j: u32, horizon: f64, s0: f64) -> Result<f64, IntegralError> {
    if !(horizon.is_finite() && s0 >= 0.0 && s0 < horizon) {
        return Err(IntegralError::HypothesisViolated(format!("need 0 ≤ s0 < T, got s0 = {s0}, T = {horizon}")));
    }
    let folds = j as f64 + 1.0;
    Ok((folds * (std::f64::consts::PI * (horizon - s0)).ln() - 2.0 * ln_gamma((folds + 2.0) / 2.0)).exp())
}

/// Both sides of `Γ(x)/Γ(x+s) ≤ x^-s ((x+s)/x)^(1−s)` for `x > 0`, `s ∈ [0, 1]`.
pub fn wendel(x: f64, s: f64) -> Result<(f64, f64), IntegralError> {
    if !(x > 0.0) || !(0.0..=1.0).contains(&s) {
        return Err(IntegralError::HypothesisViolated(format!("need x > 0, s ∈ [0, 1]; got x = {x}, s = {s}")));
    }
    let lhs = (ln_gamma(x) - ln_gamma(x + s)).exp();
    let rhs = x.powf(-s) * ((x + s) / x).powf(1.0 - s);
    Ok((lhs, rhs))
}

fn product_moment_check(alpha: f64, p: f64, horizon: f64, t: f64) -> Result<f64, IntegralError> {
    if !(alpha > 0.0 && alpha < 1.0) || !(p > 1.0 && p.is_finite()) || !(horizon.is_finite() && t >= 0.0 && t < horizon) {
        return Err(IntegralError::HypothesisViolated(format!(
            "need α ∈ (0, 1), p ∈ (1, ∞), 0 ≤ t < T; got α = {alpha}, p = {p}, t = {t}, T = {horizon}"
        )));
    }
    let a1 = alpha * (p - 1.0) - p / 2.0 + 1.0;
    if !(a1 > 0.0 && a1 <= 1.0) {
        return Err(IntegralError::HypothesisViolated(format!(
            "need α(p−1) ≤ p/2 < α(p−1) + 1; got α(p−1) − p/2 + 1 = {a1}"
        )));
    }
    Ok(a1)
}

/// Bound on `E|Π_{i=0..j} ϱ(S_i, S_{i+1})^-1 ⟨e_ν_i, (1, ΔW_i/ΔS_i)⟩|^p` over
/// the chain `S_{i+1} = S_i + (T−S_i) r_i`, uniformly in the coordinates ν.
///
/// With `a' = α(p−1) − p/2 + 1` the per-step factor carries `Γ(a')`, the
/// value produced by the iterated-integral upper bound at `γ = p−1`,
/// `β = p/2`.
pub fn product_moment_bound(j: u32, p: f64, alpha: f64, horizon: f64, t: f64) -> Result<f64, IntegralError> {
    let a1 = product_moment_check(alpha, p, horizon, t)?;
    Ok(product_moment_with_gamma(alpha, p, horizon - t, j, ln_gamma(a1)))
}

/// The same bound with `Γ(p/2)` in place of `Γ(a')`. It is not a valid upper
/// bound in general and is kept for comparison only.
#[doc(hidden)]
pub fn product_moment_bound_gamma_half_p(j: u32, p: f64, alpha: f64, horizon: f64, t: f64) -> Result<f64, IntegralError> {
    product_moment_check(alpha, p, horizon, t)?;
    Ok(product_moment_with_gamma(alpha, p, horizon - t, j, ln_gamma(p / 2.0)))
}

fn product_moment_with_gamma(alpha: f64, p: f64, gap: f64, j: u32, ln_g: f64) -> f64 {
    let a1 = alpha * (p - 1.0) - p / 2.0 + 1.0;
    let h = p / 2.0;
    let jf = j as f64;
    let gauss = gap.powf(h).max(2f64.powf(h) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt());
    let ln_step = gauss.ln() + h * gap.ln() + ln_g - (p - 1.0) * (1.0 - alpha).ln() - a1 * h.ln();
    let ln = (jf + 1.0) * ln_step
        + (h + (p * jf / 2.0 + 1.0).ln()) / (2.0 * p)
        + a1 * (ln_gamma(2.0 / p) - ln_gamma(1.0 + jf + 2.0 / p));
    ln.exp()
}
