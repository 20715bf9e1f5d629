//! The multilevel Picard recursion.
//!
//! For depth `n ≥ 1` the estimate of `(u, ∇u)(t, x)` is
//!
//! ```text
//! (g(x), 0)
//!   + M^-n Σ_i (g(x + √τ Z_i) − g(x)) (1, Z_i / √τ)
//!   + Σ_{l<n} M^-(n-l) Σ_i w(r_i) [f(s_i, ξ_i, U_l(s_i, ξ_i)) − 1{l≥1} f(s_i, ξ_i, U_{l-1}(s_i, ξ_i))]
//!                                 · (1, Z_i / √(τ r_i))
//! ```
//!
//! with `τ = T − t`, `s_i = t + τ r_i`, `ξ_i = x + √(τ r_i) Z_i` and
//! `w(r) = τ r^(1−e) / e`. The g-term sample `i` reads stream `(θ, 0, −i)`;
//! level term `(l, i)` reads `(r_i, Z_i)` from stream `(θ, l, i)`, recurses
//! into `U_l` under `(θ, l, i)` and into `U_{l−1}` under `(θ, −l, i)`. Both
//! branches see the same `(r_i, Z_i)`.
//!
//! The recursion runs on an explicit frame stack, so depth is limited by heap
//! rather than by the call stack.

use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::cost_rv;
use crate::problem::{config_violations, problem_violations, MlpConfig, PdeProblem, ThetaPath, TimeConvention, ValidationErrors};
use crate::sampler::{DrawLedger, PathDigest, StreamKey};

/// Default ceiling on the predicted number of scalar draws per evaluation.
pub const DEFAULT_COST_BUDGET: u128 = 1_000_000_000;

/// Environment variable overriding [`DEFAULT_COST_BUDGET`].
pub const COST_BUDGET_ENV: &str = "MLP_COST_BUDGET";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Refuse evaluations whose predicted draw count exceeds this.
    pub cost_budget: u128,
    /// Run replications on the rayon pool.
    pub parallel: bool,
    /// Test hook: replaces the importance weight `τ r^(1−e)/e` with the
    /// wrong `τ r/e`. Only the harness mutation check sets this.
    #[doc(hidden)]
    pub corrupt_time_weight: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cost_budget: DEFAULT_COST_BUDGET,
            parallel: true,
            corrupt_time_weight: false,
        }
    }
}

impl EvalOptions {
    /// Defaults, with the budget taken from `MLP_COST_BUDGET` when it parses.
    pub fn from_env() -> Self {
        let mut opts = Self::default();
        if let Some(b) = std::env::var(COST_BUDGET_ENV).ok().and_then(|v| v.trim().parse::<u128>().ok()) {
            opts.cost_budget = b;
        }
        opts
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("query time t = {t} equals the horizon T = {horizon}; the estimator is defined on [0, T)")]
    QueryAtTerminalTime { t: f64, horizon: f64 },
    #[error("query time t = {t} lies outside [0, {horizon})")]
    QueryOutsideDomain { t: f64, horizon: f64 },
    #[error("predicted cost {predicted} scalar draws exceeds the budget of {budget}")]
    DepthCostGuard { predicted: u128, budget: u128 },
    #[error("predicted cost for d = {d}, n = {n}, M = {m} overflows 128 bits")]
    CostOverflow { d: usize, n: u32, m: u32 },
    #[error("query point has {found} coordinates, problem dimension is {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("evaluate expects a backward-convention problem; run to_canonical first")]
    NonCanonicalProblem,
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error("rmse of an empty sample")]
    EmptySample,
}

/// Joint estimate of `(u, ∇u)` at one point plus the number of scalar random
/// variables consumed to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEstimate {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub draws: u64,
}

impl FieldEstimate {
    fn from_vector(v: Vec<f64>, draws: u64) -> Self {
        Self {
            value: v[0],
            gradient: v[1..].to_vec(),
            draws,
        }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            value: 0.0,
            gradient: vec![0.0; d],
            draws: 0,
        }
    }
}

struct Ctx<'a> {
    problem: &'a PdeProblem,
    d: usize,
    horizon: f64,
    e: f64,
    corrupt: bool,
    /// `powers[k] = M^k`
    powers: Vec<u64>,
    zeros: Vec<f64>,
}

impl Ctx<'_> {
    #[inline]
    fn weight(&self, tau: f64, r: f64) -> f64 {
        if self.corrupt {
            tau * r / self.e
        } else {
            tau * r.powf(1.0 - self.e) / self.e
        }
    }
}

enum Phase {
    NextTerm,
    AwaitPlus,
    AwaitMinus,
}

struct Term {
    s: f64,
    xi: Vec<f64>,
    /// `Z / √(τ r)`
    grad_weight: Vec<f64>,
    /// `w(r) / M^(n−l)`
    coef: f64,
    plus: f64,
}

struct Frame {
    depth: u32,
    t: f64,
    digest: PathDigest,
    acc: Vec<f64>,
    level: u32,
    index: u64,
    phase: Phase,
    term: Option<Term>,
}

enum Action {
    Call { depth: u32, t: f64, x: Vec<f64>, digest: PathDigest },
    Return(Vec<f64>),
}

impl Frame {
    /// Sets up `U_depth(t, x)` and folds in the g-term, which needs no recursion.
    fn new(ctx: &Ctx<'_>, depth: u32, t: f64, x: &[f64], digest: PathDigest, ledger: &mut DrawLedger) -> Self {
        debug_assert!(depth >= 1);
        let d = ctx.d;
        let tau = ctx.horizon - t;
        let sqrt_tau = tau.sqrt();
        let gx = ctx.problem.data(x);
        let samples = ctx.powers[depth as usize];

        let mut z = vec![0.0; d];
        let mut shifted = vec![0.0; d];
        let mut sum_value = 0.0;
        let mut sum_grad = vec![0.0; d];
        for i in 1..=samples {
            digest.child(0, -(i as i64)).stream().gaussian_into(&mut z, ledger);
            for k in 0..d {
                shifted[k] = x[k] + sqrt_tau * z[k];
            }
            let diff = ctx.problem.data(&shifted) - gx;
            sum_value += diff;
            for k in 0..d {
                sum_grad[k] += diff * z[k];
            }
        }
        let inv = 1.0 / samples as f64;
        let mut acc = Vec::with_capacity(d + 1);
        acc.push(gx + sum_value * inv);
        acc.extend(sum_grad.iter().map(|g| g * inv / sqrt_tau));

        Self {
            depth,
            t,
            digest,
            acc,
            level: 0,
            index: 1,
            phase: Phase::NextTerm,
            term: None,
        }
    }

    fn accumulate(&mut self, diff: f64) {
        let term = self.term.take().expect("active term");
        let scaled = term.coef * diff;
        self.acc[0] += scaled;
        for (a, g) in self.acc[1..].iter_mut().zip(&term.grad_weight) {
            *a += scaled * g;
        }
        self.index += 1;
        self.phase = Phase::NextTerm;
    }

    /// Advances until the frame needs a child value or is finished. `x` is the
    /// frame's own query point.
    fn step_at(&mut self, ctx: &Ctx<'_>, x: &[f64], mut incoming: Option<Vec<f64>>, ledger: &mut DrawLedger) -> Action {
        loop {
            match self.phase {
                Phase::NextTerm => {
                    if self.level == self.depth {
                        return Action::Return(std::mem::take(&mut self.acc));
                    }
                    let count = ctx.powers[(self.depth - self.level) as usize];
                    if self.index > count {
                        self.level += 1;
                        self.index = 1;
                        continue;
                    }
                    let node = self.digest.child(self.level as i64, self.index as i64);
                    let mut stream = node.stream();
                    let r = stream.time_fraction(ctx.e, ledger);
                    let mut z = vec![0.0; ctx.d];
                    stream.gaussian_into(&mut z, ledger);

                    let tau = ctx.horizon - self.t;
                    let step = (tau * r).sqrt();
                    let s = self.t + tau * r;
                    let xi: Vec<f64> = x
                        .iter().zip(&z).map(|(x, z)| x + step * z).collect();
                    let grad_weight: Vec<f64> = z.iter().map(|z| z / step).collect();
                    let coef = ctx.weight(tau, r) / count as f64;
                    self.term = Some(Term {
                        s,
                        xi,
                        grad_weight,
                        coef,
                        plus: 0.0,
                    });

                    if self.level == 0 {
                        let term = self.term.as_ref().unwrap();
                        let plus = ctx.problem.nonlinearity(term.s, &term.xi, 0.0, &ctx.zeros);
                        self.accumulate(plus);
                        continue;
                    }
                    self.phase = Phase::AwaitPlus;
                    let term = self.term.as_ref().unwrap();
                    return Action::Call {
                        depth: self.level,
                        t: term.s,
                        x: term.xi.clone(),
                        digest: node,
                    };
                }
                Phase::AwaitPlus => {
                    let v = incoming.take().expect("plus branch result");
                    let term = self.term.as_mut().unwrap();
                    let plus = ctx.problem.nonlinearity(term.s, &term.xi, v[0], &v[1..]);
                    if self.level == 1 {
                        let minus = ctx.problem.nonlinearity(term.s, &term.xi, 0.0, &ctx.zeros);
                        self.accumulate(plus - minus);
                        continue;
                    }
                    term.plus = plus;
                    self.phase = Phase::AwaitMinus;
                    return Action::Call {
                        depth: self.level - 1,
                        t: term.s,
                        x: term.xi.clone(),
                        digest: self.digest.child(-(self.level as i64), self.index as i64),
                    };
                }
                Phase::AwaitMinus => {
                    let v = incoming.take().expect("minus branch result");
                    let term = self.term.as_ref().unwrap();
                    let minus = ctx.problem.nonlinearity(term.s, &term.xi, v[0], &v[1..]);
                    let plus = term.plus;
                    self.accumulate(plus - minus);
                }
            }
        }
    }
}

fn run(ctx: &Ctx<'_>, depth: u32, t: f64, x: &[f64], digest: PathDigest, ledger: &mut DrawLedger) -> Vec<f64> {
    if depth == 0 {
        return vec![0.0; ctx.d + 1];
    }
    let mut stack: Vec<(Frame, Vec<f64>)> = vec![(Frame::new(ctx, depth, t, x, digest, ledger), x.to_vec())];
    let mut incoming = None;
    loop {
        let (frame, fx) = stack.last_mut().expect("non-empty stack");
        match frame.step_at(ctx, fx, incoming.take(), ledger) {
            Action::Call { depth, t, x, digest } => {
                let child = Frame::new(ctx, depth, t, &x, digest, ledger);
                stack.push((child, x));
            }
            Action::Return(v) => {
                stack.pop();
                if stack.is_empty() {
                    return v;
                }
                incoming = Some(v);
            }
        }
    }
}

/// Evaluates `U_{n,M}^θ(t, x)` for a backward-convention problem.
pub fn evaluate(problem: &PdeProblem, config: &MlpConfig, theta: &ThetaPath, t: f64, x: &[f64]) -> Result<FieldEstimate, EngineError> {
    evaluate_with(problem, config, theta, t, x, &EvalOptions::default())
}

pub fn evaluate_with(
    problem: &PdeProblem,
    config: &MlpConfig,
    theta: &ThetaPath,
    t: f64,
    x: &[f64],
    options: &EvalOptions,
) -> Result<FieldEstimate, EngineError> {
    let ctx = prepare(problem, config, t, x, options)?;
    if config.depth == 0 {
        return Ok(FieldEstimate::zero(ctx.d));
    }
    let digest = StreamKey::new(config.root_seed, theta.clone()).digest();
    let mut ledger = DrawLedger::default();
    let v = run(&ctx, config.depth, t, x, digest, &mut ledger);
    Ok(FieldEstimate::from_vector(v, ledger.scalar_draws))
}

fn prepare<'a>(problem: &'a PdeProblem, config: &MlpConfig, t: f64, x: &[f64], options: &EvalOptions) -> Result<Ctx<'a>, EngineError> {
    let mut violations = problem_violations(problem);
    violations.extend(config_violations(config));
    if !violations.is_empty() {
        return Err(ValidationErrors(violations).into());
    }
    if problem.convention() != TimeConvention::BackwardHalfLaplacian {
        return Err(EngineError::NonCanonicalProblem);
    }
    let d = problem.dimension();
    if x.len() != d {
        return Err(EngineError::DimensionMismatch { expected: d, found: x.len() });
    }
    let horizon = problem.horizon();
    if t == horizon {
        return Err(EngineError::QueryAtTerminalTime { t, horizon });
    }
    if !(t >= 0.0 && t < horizon) {
        return Err(EngineError::QueryOutsideDomain { t, horizon });
    }
    let (n, m) = (config.depth, config.base);
    let predicted = cost_rv(d, n, m).map_err(|_| EngineError::CostOverflow { d, n, m })?;
    if predicted > options.cost_budget {
        return Err(EngineError::DepthCostGuard {
            predicted,
            budget: options.cost_budget,
        });
    }
    // M^n <= predicted <= budget, so these fit.
    let mut powers = Vec::with_capacity(n as usize + 1);
    let mut p: u64 = 1;
    for _ in 0..=n {
        powers.push(p);
        p = p.saturating_mul(m as u64);
    }
    Ok(Ctx {
        problem,
        d,
        horizon,
        e: config.time_cdf_exponent,
        corrupt: options.corrupt_time_weight,
        powers,
        zeros: vec![0.0; d],
    })
}

/// `config.replications` independent estimates under root paths `(1)`, `(2)`, ….
pub fn replicate(problem: &PdeProblem, config: &MlpConfig, t: f64, x: &[f64]) -> Result<Vec<FieldEstimate>, EngineError> {
    replicate_with(problem, config, t, x, &EvalOptions::default())
}

pub fn replicate_with(
    problem: &PdeProblem,
    config: &MlpConfig,
    t: f64,
    x: &[f64],
    options: &EvalOptions,
) -> Result<Vec<FieldEstimate>, EngineError> {
    // Surface argument errors once rather than per replication.
    prepare(problem, config, t, x, options)?;
    let eval = |k: usize| evaluate_with(problem, config, &ThetaPath::root(k as i64), t, x, options);
    let range = 1..=config.replications;
    if options.parallel {
        range.into_par_iter().map(eval).collect()
    } else {
        range.map(eval).collect()
    }
}

/// Empirical L² errors: value and worst gradient coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmse {
    pub value: f64,
    pub gradient_max: f64,
}

impl Rmse {
    /// `√(rmse_value² + rmse_gradient_max²)`.
    pub fn combined(&self) -> f64 {
        self.value.hypot(self.gradient_max)
    }
}

pub fn rmse(estimates: &[FieldEstimate], reference_value: f64, reference_gradient: &[f64]) -> Result<Rmse, EngineError> {
    if estimates.is_empty() {
        return Err(EngineError::EmptySample);
    }
    let n = estimates.len() as f64;
    let value = (estimates.iter().map(|e| (e.value - reference_value).powi(2)).sum::<f64>() / n).sqrt();
    let gradient_max = (0..reference_gradient.len())
        .map(|i| (estimates.iter().map(|e| (e.gradient[i] - reference_gradient[i]).powi(2)).sum::<f64>() / n).sqrt())
        .fold(0.0, f64::max);
    Ok(Rmse { value, gradient_max })
}
