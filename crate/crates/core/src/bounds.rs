//! A-priori error bound, regularity bounds for the exact solution, the cost
//! recursion and a depth schedule built on top of them.
//!
//! Exponent conventions: [`ErrorBoundInput::alpha`] is the density exponent
//! `ρ(r) = (1−α) r^-α`, so `α = 1 − e` for the engine's time CDF exponent `e`.

use std::f64::consts::PI;

use libm::tgamma as gamma;
use thiserror::Error;

use crate::problem::PdeProblem;
use crate::sampler::{DrawLedger, PathDigest};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("cost for d = {d}, n = {n}, M = {m} overflows 128 bits")]
    Overflow { d: usize, n: u32, m: u32 },
    #[error("M-rule exponent q = {q} outside the admissible interval ({lower}, {upper})")]
    AdmissibilityViolated { q: f64, lower: f64, upper: f64 },
    #[error("no depth n ≤ {max_depth} reaches ε = {target}; smallest bound found is {best}")]
    NoFeasibleDepth { target: f64, max_depth: u32, best: f64 },
}

/// Regularity constants and path moments of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityData {
    /// Lipschitz constant of `f` in `y`.
    pub l0: f64,
    /// Lipschitz constants of `f` in `z`.
    pub l: Vec<f64>,
    /// Lipschitz constants of `f` in `x`.
    pub l_space: Vec<f64>,
    /// Lipschitz constants of `g`.
    pub k: Vec<f64>,
    /// `sup_s ‖g(ξ + √s Z)‖_{L^q}`.
    pub g_moment: f64,
    /// `sup_{s,t} ‖f(t, ξ + √s Z, 0, 0)‖_{L^q}`.
    pub f0_moment: f64,
    pub q: f64,
    /// The moments came from Monte Carlo rather than analysis.
    pub estimated: bool,
}

impl RegularityData {
    /// Constants read from the problem's declared Lipschitz data, with the
    /// `x`-constants of `f` defaulting to those of `g`. Moments start at zero.
    pub fn from_problem(problem: &PdeProblem, p: f64) -> Self {
        let sol = problem.lipschitz_solution();
        Self {
            l0: sol.first().copied().unwrap_or(0.0),
            l: sol.iter().skip(1).copied().collect(),
            l_space: problem.lipschitz_space().to_vec(),
            k: problem.lipschitz_space().to_vec(),
            g_moment: 0.0,
            f0_moment: 0.0,
            q: moment_order(p),
            estimated: false,
        }
    }

    pub fn with_moments(mut self, g_moment: f64, f0_moment: f64) -> Self {
        self.g_moment = g_moment;
        self.f0_moment = f0_moment;
        self
    }

    pub fn with_space_lipschitz(mut self, l_space: Vec<f64>) -> Self {
        self.l_space = l_space;
        self
    }

    /// Fills both moments by Monte Carlo along `ξ + √s Z` on a grid of times
    /// and marks the data as estimated.
    pub fn with_estimated_moments(mut self, problem: &PdeProblem, xi: &[f64], samples: usize, seed: u64) -> Self {
        let (g, f0) = estimate_path_moments(problem, xi, self.q, samples, seed);
        self.g_moment = g;
        self.f0_moment = f0;
        self.estimated = true;
        self
    }

    pub fn lipschitz_l1(&self) -> f64 {
        self.l0 + self.l.iter().sum::<f64>()
    }
}

/// `q = 2p/(p−2)`; infinite at `p = 2`.
pub fn moment_order(p: f64) -> f64 {
    if p == 2.0 {
        f64::INFINITY
    } else {
        2.0 * p / (p - 2.0)
    }
}

const MOMENT_GRID: usize = 9;

/// Monte Carlo estimates of `sup_s ‖g(ξ+√s Z)‖_q` and
/// `sup_{s,t} ‖f(t, ξ+√s Z, 0, 0)‖_q` over a uniform grid in `[0, T]`.
/// `q = ∞` uses the sample maximum.
pub fn estimate_path_moments(problem: &PdeProblem, xi: &[f64], q: f64, samples: usize, seed: u64) -> (f64, f64) {
    let d = problem.dimension();
    let horizon = problem.horizon();
    let zeros = vec![0.0; d];
    let grid: Vec<f64> = (0..MOMENT_GRID).map(|k| horizon * k as f64 / (MOMENT_GRID - 1) as f64).collect();
    let root = PathDigest::new(seed);
    let mut ledger = DrawLedger::default();
    let norm = |values: &mut dyn Iterator<Item = f64>| -> f64 {
        if q.is_infinite() {
            values.map(f64::abs).fold(0.0, f64::max)
        } else {
            let (mut acc, mut n) = (0.0, 0usize);
            for v in values {
                acc += v.abs().powf(q);
                n += 1;
            }
            (acc / n.max(1) as f64).powf(1.0 / q)
        }
    };
    let mut g_sup = 0.0f64;
    let mut f_sup = 0.0f64;
    for (si, &s) in grid.iter().enumerate() {
        let points: Vec<Vec<f64>> = (0..samples)
            .map(|k| {
                let z = root.child(si as i64, k as i64).stream().gaussian(d, &mut ledger);
                xi.iter().zip(&z).map(|(x, z)| x + s.sqrt() * z).collect()
            })
            .collect();
        g_sup = g_sup.max(norm(&mut points.iter().map(|p| problem.data(p))));
        for &t in &grid {
            f_sup = f_sup.max(norm(&mut points.iter().map(|p| problem.nonlinearity(t, p, 0.0, &zeros))));
        }
    }
    (g_sup, f_sup)
}

/// `e^{L0 (T−t)} (K_i + (T−t) 𝔏_i)` for each coordinate.
pub fn gradient_bound(reg: &RegularityData, horizon: f64, t: f64) -> Vec<f64> {
    let tau = horizon - t;
    let growth = (reg.l0 * tau).exp();
    reg.k
        .iter()
        .zip(&reg.l_space)
        .map(|(k, ls)| growth * (k + tau * ls))
        .collect()
}

/// `e^{L0 T} [g_moment + T f0_moment + T e^{L0 T} Σ_j L_j (K_j + T 𝔏_j)]`.
pub fn solution_moment_bound(reg: &RegularityData, horizon: f64) -> f64 {
    let growth = (reg.l0 * horizon).exp();
    let coupling: f64 = reg
        .l
        .iter()
        .zip(reg.k.iter().zip(&reg.l_space))
        .map(|(l, (k, ls))| if *l == 0.0 { 0.0 } else { l * (k + horizon * ls) })
        .sum();
    growth * (reg.g_moment + horizon * reg.f0_moment + horizon * growth * coupling)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBoundInput {
    pub p: f64,
    /// Density exponent of the time fraction.
    pub alpha: f64,
    pub n: u32,
    pub m: u32,
    pub horizon: f64,
    pub t: f64,
    pub reg: RegularityData,
    /// Replaces `sup max_i ‖u_i‖_{L^q}` when the true norm is known.
    pub u_norm_override: Option<f64>,
}

/// The pieces of the error bound, for reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBoundParts {
    pub value: f64,
    pub c: f64,
    pub beta: f64,
    pub ln_prefactor: f64,
    pub bracket: f64,
    pub u_norm: f64,
    pub estimated: bool,
}

fn check_alpha(p: f64, alpha: f64) -> Result<f64, BoundsError> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(BoundsError::HypothesisViolated(format!("p = {p} must be in [2, ∞)")));
    }
    let lo = (p - 2.0) / (2.0 * (p - 1.0));
    let hi = p / (2.0 * (p - 1.0));
    if !(alpha > lo && alpha < hi && alpha < 1.0) {
        return Err(BoundsError::HypothesisViolated(format!(
            "α = {alpha} outside ({lo}, {})",
            hi.min(1.0)
        )));
    }
    Ok(alpha / 2.0 - (1.0 - alpha) * (p - 2.0) / (2.0 * p))
}

pub fn error_bound(input: &ErrorBoundInput) -> Result<f64, BoundsError> {
    error_bound_parts(input).map(|b| b.value)
}

pub fn error_bound_parts(input: &ErrorBoundInput) -> Result<ErrorBoundParts, BoundsError> {
    let ErrorBoundInput {
        p,
        alpha,
        n,
        m,
        horizon,
        t,
        ref reg,
        u_norm_override,
    } = *input;
    let beta = check_alpha(p, alpha)?;
    if n == 0 || m == 0 {
        return Err(BoundsError::HypothesisViolated(format!("need n, M ≥ 1, got n = {n}, M = {m}")));
    }
    if !(horizon.is_finite() && t >= 0.0 && t < horizon) {
        return Err(BoundsError::HypothesisViolated(format!("need 0 ≤ t < T, got t = {t}, T = {horizon}")));
    }
    let tau = horizon - t;
    let gauss = 2f64.sqrt() * gamma((p + 1.0) / 2.0).powf(1.0 / p) * PI.powf(-1.0 / (2.0 * p));
    let c = 1f64.max(
        2.0 * tau.sqrt()
            * gamma(p / 2.0).powf(1.0 / p)
            * (1.0 - alpha).powf(1.0 / p - 1.0)
            * reg.lipschitz_l1().max(1.0)
            * tau.sqrt().max(gauss),
    );
    let (nf, mf) = (n as f64, m as f64);
    let ln_prefactor = 0.25f64.ln() + (1.0 + p * nf / 2.0).ln() / 8.0 - nf / 2.0 * mf.ln()
        + nf * (2.0 * c).ln()
        + 0.125
        + beta * mf.powf(1.0 / (2.0 * beta));

    let u_norm = match u_norm_override {
        Some(u) => u,
        None => gradient_bound(reg, horizon, t)
            .into_iter()
            .fold(solution_moment_bound(reg, horizon), f64::max),
    };
    let k1: f64 = reg.k.iter().sum();
    let k_term = if k1 == 0.0 { 0.0 } else { 2.0 / c * tau.max(3.0).sqrt() * k1 };
    let bracket = k_term + reg.f0_moment + mf.sqrt() * u_norm;
    let value = if bracket == 0.0 { 0.0 } else { ln_prefactor.exp() * bracket };
    Ok(ErrorBoundParts {
        value,
        c,
        beta,
        ln_prefactor,
        bracket,
        u_norm,
        estimated: reg.estimated,
    })
}

/// Scalar draws consumed by one depth-`n` evaluation:
/// `RV_0 = 0`, `RV_n = d M^n + Σ_{l<n} M^{n−l} (d + 1 + RV_l + 1{l≥1} RV_{l−1})`.
pub fn cost_rv(d: usize, n: u32, m: u32) -> Result<u128, BoundsError> {
    let overflow = || BoundsError::Overflow { d, n, m };
    let (dd, mm) = (d as u128, m as u128);
    let mut powers = vec![1u128];
    for _ in 0..n {
        let next = powers.last().unwrap().checked_mul(mm).ok_or_else(overflow)?;
        powers.push(next);
    }
    let mut rv = vec![0u128; n as usize + 1];
    for k in 1..=n as usize {
        let mut total = dd.checked_mul(powers[k]).ok_or_else(overflow)?;
        for l in 0..k {
            let inner = (dd + 1)
                .checked_add(rv[l])
                .and_then(|v| if l >= 1 { v.checked_add(rv[l - 1]) } else { Some(v) })
                .ok_or_else(overflow)?;
            let term = powers[k - l].checked_mul(inner).ok_or_else(overflow)?;
            total = total.checked_add(term).ok_or_else(overflow)?;
        }
        rv[k] = total;
    }
    Ok(rv[n as usize])
}

/// `d (5M)^n`.
pub fn cost_bound_closed(d: usize, n: u32, m: u32) -> Result<u128, BoundsError> {
    let overflow = || BoundsError::Overflow { d, n, m };
    let base = 5u128.checked_mul(m as u128).ok_or_else(overflow)?;
    base.checked_pow(n)
        .and_then(|v| v.checked_mul(d as u128))
        .ok_or_else(overflow)
}

pub const MAX_SCHEDULE_DEPTH: u32 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRequest {
    pub target_eps: f64,
    pub dimension: usize,
    pub reg: RegularityData,
    pub p: f64,
    /// Density exponent; the engine exponent is `e = 1 − alpha`.
    pub alpha: f64,
    /// `M = ⌊n^q⌋`, at least 1.
    pub m_exponent: f64,
    pub horizon: f64,
    pub t: f64,
    pub u_norm_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub depth: u32,
    pub base: u32,
    /// `None` when the count exceeds 128 bits.
    pub predicted_cost: Option<u128>,
    pub bound: f64,
}

/// Open interval of admissible `q` for engine exponent `e`:
/// `(max{(1−2e)/(1−e), 0}, 1−e)`.
pub fn admissible_m_exponents(e: f64) -> (f64, f64) {
    (((1.0 - 2.0 * e) / (1.0 - e)).max(0.0), 1.0 - e)
}

pub fn m_rule(n: u32, q: f64) -> u32 {
    ((n as f64).powf(q).floor() as u32).max(1)
}

/// Smallest `n ≤ 50` with `error_bound(n, ⌊n^q⌋) ≤ ε`.
pub fn schedule(request: &ScheduleRequest) -> Result<Schedule, BoundsError> {
    let e = 1.0 - request.alpha;
    let (lower, upper) = admissible_m_exponents(e);
    let q = request.m_exponent;
    if !(q > lower && q < upper) {
        return Err(BoundsError::AdmissibilityViolated { q, lower, upper });
    }
    let mut best = f64::INFINITY;
    for n in 1..=MAX_SCHEDULE_DEPTH {
        let m = m_rule(n, q);
        let bound = error_bound(&ErrorBoundInput {
            p: request.p,
            alpha: request.alpha,
            n,
            m,
            horizon: request.horizon,
            t: request.t,
            reg: request.reg.clone(),
            u_norm_override: request.u_norm_override,
        })?;
        best = best.min(bound);
        if bound <= request.target_eps {
            return Ok(Schedule {
                depth: n,
                base: m,
                predicted_cost: cost_rv(request.dimension, n, m).ok(),
                bound,
            });
        }
    }
    Err(BoundsError::NoFeasibleDepth {
        target: request.target_eps,
        max_depth: MAX_SCHEDULE_DEPTH,
        best,
    })
}
