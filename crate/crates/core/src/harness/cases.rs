//! Benchmarks with closed-form solutions.
//!
//! With `S(x) = (1/d) Σ sin x_i`:
//!
//! * `linear-heat-quadratic`: `g = ‖x‖²`, `f = 0`, `u = ‖x‖² + d(T−t)`.
//! * `grad-free-exponential`: `g = S`, `f = (λ+½) y`, `u = e^{λ(T−t)} S(x)`.
//! * `grad-dependent-sine`: as above plus `c (Σ z_i − e^{λ(T−t)} (1/d) Σ cos x_i)`,
//!   which vanishes on the solution.
//! * `forward-heat`: the previous case on the forward axis with horizon `T/2`,
//!   `w(t, x) = e^{2λt} S(x)`, evaluated at the final forward time.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::HarnessError;
use crate::bounds::RegularityData;
use crate::problem::{to_canonical, CanonicalProblem, PdeProblem, TimeConvention};

pub const CASE_NAMES: [&str; 4] = [
    "linear-heat-quadratic",
    "grad-free-exponential",
    "grad-dependent-sine",
    "forward-heat",
];

/// `(t, x) ↦ (u, ∇u)` in the problem's own time convention.
pub type ExactFn = Arc<dyn Fn(f64, &[f64]) -> (f64, Vec<f64>) + Send + Sync>;

/// Benchmark-supplied inputs to the error bound at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct NormOverrides {
    /// Regularity data of the canonical problem.
    pub regularity: RegularityData,
    /// Upper bound on `sup_s max_i ‖u_i(s, x + W_s − W_t)‖_{L^q}`.
    pub u_norm: f64,
}

pub type NormFn = Arc<dyn Fn(f64, &[f64]) -> NormOverrides + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseParams {
    pub dimension: usize,
    pub lambda: f64,
    pub c: f64,
    /// Horizon of the canonical (backward) problem.
    pub horizon: f64,
    /// Exponent `p` of the error analysis; the moments use `q = 2p/(p−2)`.
    pub p: f64,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            dimension: 1,
            lambda: 0.25,
            c: 0.5,
            horizon: 1.0,
            p: 4.0,
        }
    }
}

impl CaseParams {
    pub fn with_dimension(mut self, d: usize) -> Self {
        self.dimension = d;
        self
    }
}

#[derive(Clone)]
pub struct BenchmarkCase {
    pub name: String,
    pub problem: PdeProblem,
    exact: ExactFn,
    norms: NormFn,
    /// Time at which the study evaluates, in the problem's own convention.
    pub query_time: f64,
}

impl std::fmt::Debug for BenchmarkCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkCase")
            .field("name", &self.name)
            .field("problem", &self.problem)
            .field("query_time", &self.query_time)
            .finish_non_exhaustive()
    }
}

const FD_STEP: f64 = 1e-3;
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

impl BenchmarkCase {
    /// Registers a case after checking `exact` against the PDE and its own
    /// gradient by finite differences.
    pub fn new(
        name: impl Into<String>,
        problem: PdeProblem,
        exact: ExactFn,
        norms: NormFn,
        query_time: f64,
    ) -> Result<Self, HarnessError> {
        let case = Self {
            name: name.into(),
            problem,
            exact,
            norms,
            query_time,
        };
        let residual = case.max_residual();
        if !(residual < RESIDUAL_TOLERANCE) {
            return Err(HarnessError::ResidualCheckFailed {
                name: case.name,
                residual,
            });
        }
        let error = case.max_gradient_error();
        if !(error < RESIDUAL_TOLERANCE) {
            return Err(HarnessError::GradientCheckFailed { name: case.name, error });
        }
        Ok(case)
    }

    pub fn by_name(name: &str, params: CaseParams) -> Result<Self, HarnessError> {
        match name {
            "linear-heat-quadratic" => linear_heat_quadratic(params),
            "grad-free-exponential" => grad_free_exponential(params),
            "grad-dependent-sine" => grad_dependent_sine(params),
            "forward-heat" => forward_heat(params),
            other => Err(HarnessError::UnknownCase(other.to_string())),
        }
    }

    pub fn builtin(params: CaseParams) -> Result<Vec<Self>, HarnessError> {
        CASE_NAMES.iter().map(|n| Self::by_name(n, params)).collect()
    }

    pub fn dimension(&self) -> usize {
        self.problem.dimension()
    }

    pub fn exact(&self, t: f64, x: &[f64]) -> (f64, Vec<f64>) {
        (self.exact)(t, x)
    }

    /// Exact solution at the query time.
    pub fn reference(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.exact(self.query_time, x)
    }

    pub fn canonical(&self) -> CanonicalProblem {
        to_canonical(&self.problem)
    }

    /// Norm inputs at canonical time `t` and point `x`.
    pub fn norm_overrides(&self, t: f64, x: &[f64]) -> NormOverrides {
        (self.norms)(t, x)
    }

    /// The two standard query points: the origin and `(1, …, 1)/√d`.
    pub fn query_points(&self) -> [Vec<f64>; 2] {
        let d = self.dimension();
        [vec![0.0; d], vec![1.0 / (d as f64).sqrt(); d]]
    }

    fn check_grid(&self) -> Vec<(f64, Vec<f64>)> {
        let d = self.dimension();
        let horizon = self.problem.horizon();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut points = self.query_points().to_vec();
        for _ in 0..4 {
            points.push(
                (0..d)
                    .map(|_| 4.0 * (rng.next_u64() as f64 / u64::MAX as f64) - 2.0)
                    .collect(),
            );
        }
        let times = [0.1, 0.35, 0.6, 0.85].map(|f| f * horizon);
        times
            .iter()
            .flat_map(|&t| points.iter().map(move |x| (t, x.clone())))
            .collect()
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.exact(t, x).0
    }

    /// Fourth-order central differences.
    fn first_difference(h: f64, eval: impl Fn(f64) -> f64) -> f64 {
        (-eval(2.0 * h) + 8.0 * eval(h) - 8.0 * eval(-h) + eval(-2.0 * h)) / (12.0 * h)
    }

    fn second_difference(h: f64, center: f64, eval: impl Fn(f64) -> f64) -> f64 {
        (-eval(2.0 * h) + 16.0 * eval(h) - 30.0 * center + 16.0 * eval(-h) - eval(-2.0 * h)) / (12.0 * h * h)
    }

    fn shifted(x: &[f64], i: usize, delta: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        y[i] += delta;
        y
    }

    /// Largest `|∂_t u + ½Δu + f|` (backward) or `|∂_t u − Δu − f|`
    /// (forward) over the check grid.
    pub fn max_residual(&self) -> f64 {
        let h = FD_STEP;
        self.check_grid()
            .into_iter()
            .map(|(t, x)| {
                let (u, grad) = self.exact(t, &x);
                let dt = Self::first_difference(h, |dh| self.value(t + dh, &x));
                let lap: f64 = (0..x.len())
                    .map(|i| Self::second_difference(h, u, |dh| self.value(t, &Self::shifted(&x, i, dh))))
                    .sum();
                let f = self.problem.nonlinearity(t, &x, u, &grad);
                match self.problem.convention() {
                    TimeConvention::BackwardHalfLaplacian => (dt + 0.5 * lap + f).abs(),
                    TimeConvention::ForwardFullLaplacian => (dt - lap - f).abs(),
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn max_gradient_error(&self) -> f64 {
        let h = FD_STEP;
        self.check_grid()
            .into_iter()
            .map(|(t, x)| {
                let (_, grad) = self.exact(t, &x);
                (0..x.len())
                    .map(|i| {
                        let fd = Self::first_difference(h, |dh| self.value(t, &Self::shifted(&x, i, dh)));
                        (fd - grad[i]).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

fn mean_sin(x: &[f64]) -> f64 {
    x.iter().map(|v| v.sin()).sum::<f64>() / x.len() as f64
}

fn mean_cos(x: &[f64]) -> f64 {
    x.iter().map(|v| v.cos()).sum::<f64>() / x.len() as f64
}

/// `E[(χ²_d)^4]^{1/4}`.
fn chi_square_l4(d: usize) -> f64 {
    let d = d as f64;
    (d * (d + 2.0) * (d + 4.0) * (d + 6.0)).powf(0.25)
}

fn linear_heat_quadratic(params: CaseParams) -> Result<BenchmarkCase, HarnessError> {
    let CaseParams { dimension: d, horizon, p, .. } = params;
    let problem = PdeProblem::backward(d, horizon, |x: &[f64]| x.iter().map(|v| v * v).sum(), |_, _, _, _| 0.0)
        // g is not globally Lipschitz
        .with_lipschitz(vec![0.0; d + 1], vec![f64::INFINITY; d]);
    let exact: ExactFn = Arc::new(move |t, x| {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        (sq + d as f64 * (horizon - t), x.iter().map(|v| 2.0 * v).collect())
    });
    let norms: NormFn = Arc::new(move |t, x| {
        let tau = horizon - t;
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        // Minkowski on ‖x + √v Z‖² = ‖x‖² + 2√v⟨x, Z⟩ + v‖Z‖², exact at x = 0.
        let quad = |v: f64| norm2 + 2.0 * v.sqrt() * norm2.sqrt() * 3f64.powf(0.25) + v * chi_square_l4(d);
        let grad = x
            .iter()
            .map(|xi| 2.0 * (xi.abs() + tau.sqrt() * 3f64.powf(0.25)))
            .fold(0.0, f64::max);
        let regularity = RegularityData {
            l0: 0.0,
            l: vec![0.0; d],
            l_space: vec![0.0; d],
            k: vec![f64::INFINITY; d],
            g_moment: quad(horizon),
            f0_moment: 0.0,
            q: crate::bounds::moment_order(p),
            estimated: false,
        };
        NormOverrides {
            regularity,
            u_norm: (quad(tau) + d as f64 * tau).max(grad),
        }
    });
    BenchmarkCase::new(CASE_NAMES[0], problem, exact, norms, 0.0)
}

fn sine_exact(lambda: f64, horizon: f64) -> ExactFn {
    Arc::new(move |t, x| {
        let growth = (lambda * (horizon - t)).exp();
        let d = x.len() as f64;
        (growth * mean_sin(x), x.iter().map(|v| growth * v.cos() / d).collect())
    })
}

/// Regularity of the sine family: `|S| ≤ 1`, `|∂_i S| ≤ 1/d`.
fn sine_norms(params: CaseParams, l_z: f64, space: f64, f0: f64) -> NormFn {
    let CaseParams {
        dimension: d,
        lambda,
        horizon,
        p,
        ..
    } = params;
    let regularity = RegularityData {
        l0: (lambda + 0.5).abs(),
        l: vec![l_z; d],
        l_space: vec![space; d],
        k: vec![1.0 / d as f64; d],
        g_moment: 1.0,
        f0_moment: f0,
        q: crate::bounds::moment_order(p),
        estimated: false,
    };
    let u_norm = (lambda.max(0.0) * horizon).exp();
    Arc::new(move |_, _| NormOverrides {
        regularity: regularity.clone(),
        u_norm,
    })
}

fn grad_free_exponential(params: CaseParams) -> Result<BenchmarkCase, HarnessError> {
    let CaseParams {
        dimension: d,
        lambda,
        horizon,
        ..
    } = params;
    let rate = lambda + 0.5;
    let mut lip = vec![0.0; d + 1];
    lip[0] = rate.abs();
    let problem = PdeProblem::backward(d, horizon, mean_sin, move |_, _, y, _| rate * y)
        .with_lipschitz(lip, vec![1.0 / d as f64; d]);
    BenchmarkCase::new(
        CASE_NAMES[1],
        problem,
        sine_exact(lambda, horizon),
        sine_norms(params, 0.0, 0.0, 0.0),
        0.0,
    )
}

fn sine_nonlinearity(lambda: f64, c: f64, horizon: f64) -> impl Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + Clone {
    let rate = lambda + 0.5;
    move |t: f64, x: &[f64], y: f64, z: &[f64]| {
        rate * y + c * (z.iter().sum::<f64>() - (lambda * (horizon - t)).exp() * mean_cos(x))
    }
}

fn sine_lipschitz(params: CaseParams, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let d = params.dimension;
    let mut lip = vec![scale * params.c.abs(); d + 1];
    lip[0] = scale * (params.lambda + 0.5).abs();
    (lip, vec![1.0 / d as f64; d])
}

fn sine_space_constant(params: CaseParams) -> f64 {
    params.c.abs() * (params.lambda.max(0.0) * params.horizon).exp() / params.dimension as f64
}

fn grad_dependent_sine(params: CaseParams) -> Result<BenchmarkCase, HarnessError> {
    let CaseParams {
        dimension: d,
        lambda,
        c,
        horizon,
        ..
    } = params;
    let (lip, space) = sine_lipschitz(params, 1.0);
    let problem = PdeProblem::backward(d, horizon, mean_sin, sine_nonlinearity(lambda, c, horizon)).with_lipschitz(lip, space);
    let sup = (lambda.max(0.0) * horizon).exp();
    BenchmarkCase::new(
        CASE_NAMES[2],
        problem,
        sine_exact(lambda, horizon),
        sine_norms(params, c.abs(), sine_space_constant(params), c.abs() * sup),
        0.0,
    )
}

fn forward_heat(params: CaseParams) -> Result<BenchmarkCase, HarnessError> {
    let CaseParams {
        dimension: d,
        lambda,
        c,
        horizon,
        ..
    } = params;
    let forward_horizon = 0.5 * horizon;
    let backward = sine_nonlinearity(lambda, c, horizon);
    // f̃(s) = f(T_f − s/2)/2 must reproduce the backward nonlinearity at s.
    let nonlinearity = move |t: f64, x: &[f64], y: f64, z: &[f64]| 2.0 * backward(2.0 * (forward_horizon - t), x, y, z);
    let (lip, space) = sine_lipschitz(params, 2.0);
    let problem = PdeProblem::forward_time_space(d, forward_horizon, mean_sin, nonlinearity).with_lipschitz(lip, space);
    let exact: ExactFn = Arc::new(move |t, x| {
        let growth = (2.0 * lambda * t).exp();
        let dd = x.len() as f64;
        (growth * mean_sin(x), x.iter().map(|v| growth * v.cos() / dd).collect())
    });
    let sup = (lambda.max(0.0) * horizon).exp();
    BenchmarkCase::new(
        CASE_NAMES[3],
        problem,
        exact,
        sine_norms(params, c.abs(), sine_space_constant(params), c.abs() * sup),
        forward_horizon,
    )
}
