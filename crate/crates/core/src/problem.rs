//! Problem and configuration types, admissibility checks, and the adapter that
//! maps the forward (`∂_t u = Δu + f`, data at `t = 0`) convention onto the
//! canonical backward (`∂_t u + ½Δu + f = 0`, data at `t = T`) convention the
//! estimator works in.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Terminal (backward) or initial (forward) data `g: R^d -> R`.
pub type DataFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Nonlinearity `f(t, x, y, z)` with `y` the solution value and `z` the gradient.
pub type NonlinearityFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeConvention {
    /// `∂_t u + ½Δu + f(t, x, u, ∇u) = 0`, `u(T, ·) = g`.
    BackwardHalfLaplacian,
    /// `∂_t u = Δu + f(t, x, u, ∇u)`, `u(0, ·) = g`.
    ForwardFullLaplacian,
}

/// A semilinear heat equation together with the Lipschitz data the error
/// analysis consumes.
///
/// `lipschitz_solution` has `d + 1` entries: the constant for `y` followed by
/// the constants for `z_1, …, z_d`. `lipschitz_space` has `d` entries and
/// bounds the spatial Lipschitz behaviour of `g`.
#[derive(Clone)]
pub struct PdeProblem {
    dimension: usize,
    horizon: f64,
    data: DataFn,
    nonlinearity: NonlinearityFn,
    lipschitz_solution: Vec<f64>,
    lipschitz_space: Vec<f64>,
    convention: TimeConvention,
}

impl fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeProblem")
            .field("dimension", &self.dimension)
            .field("horizon", &self.horizon)
            .field("lipschitz_solution", &self.lipschitz_solution)
            .field("lipschitz_space", &self.lipschitz_space)
            .field("convention", &self.convention)
            .finish_non_exhaustive()
    }
}

impl PdeProblem {
    /// Backward problem `∂_t u + ½Δu + f(t, x, u, ∇u) = 0` with `u(T, ·) = g`.
    /// Lipschitz constants default to zero; set them with
    /// [`with_lipschitz`](Self::with_lipschitz).
    pub fn backward<G, F>(dimension: usize, horizon: f64, terminal: G, nonlinearity: F) -> Self
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        F: Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            dimension,
            horizon,
            data: Arc::new(terminal),
            nonlinearity: Arc::new(nonlinearity),
            lipschitz_solution: vec![0.0; dimension + 1],
            lipschitz_space: vec![0.0; dimension],
            convention: TimeConvention::BackwardHalfLaplacian,
        }
    }

    /// Forward problem `∂_t u = Δu + f(u, ∇u)` with `u(0, ·) = g`.
    pub fn forward<G, F>(dimension: usize, horizon: f64, initial: G, nonlinearity: F) -> Self
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::forward_time_space(dimension, horizon, initial, move |_, _, y, z| nonlinearity(y, z))
    }

    /// Forward problem whose nonlinearity also sees the (forward) time and the
    /// space point: `∂_t u = Δu + f(t, x, u, ∇u)`.
    pub fn forward_time_space<G, F>(dimension: usize, horizon: f64, initial: G, nonlinearity: F) -> Self
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        F: Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            convention: TimeConvention::ForwardFullLaplacian,
            ..Self::backward(dimension, horizon, initial, nonlinearity)
        }
    }

    pub fn with_lipschitz(mut self, solution: Vec<f64>, space: Vec<f64>) -> Self {
        self.lipschitz_solution = solution;
        self.lipschitz_space = space;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn convention(&self) -> TimeConvention {
        self.convention
    }

    pub fn lipschitz_solution(&self) -> &[f64] {
        &self.lipschitz_solution
    }

    pub fn lipschitz_space(&self) -> &[f64] {
        &self.lipschitz_space
    }

    /// `‖L‖₁` over the `d + 1` solution constants.
    pub fn lipschitz_solution_l1(&self) -> f64 {
        self.lipschitz_solution.iter().sum()
    }

    #[inline]
    pub fn data(&self, x: &[f64]) -> f64 {
        (self.data)(x)
    }

    #[inline]
    pub fn nonlinearity(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.nonlinearity)(t, x, y, z)
    }

    /// Randomized check of the declared Lipschitz constants on `samples`
    /// random pairs drawn from a box of half-width `radius`.
    pub fn audit_lipschitz(&self, samples: usize, radius: f64, seed: u64) -> LipschitzAudit {
        let d = self.dimension;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = move || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| radius * (2.0 * unit() - 1.0)).collect() };
        let mut audit = LipschitzAudit::default();
        let slack = 1e-9;
        for _ in 0..samples {
            let x = draw(d);
            let x2 = draw(d);
            let yz = draw(d + 1);
            let yz2 = draw(d + 1);
            let t = self.horizon * 0.5 * (1.0 + draw(1)[0] / radius.max(f64::MIN_POSITIVE));

            let dg = (self.data(&x) - self.data(&x2)).abs();
            let g_bound: f64 = self.lipschitz_space.iter().zip(x.iter().zip(&x2)).map(|(k, (a, b))| k * (a - b).abs()).sum();
            audit.worst_data_ratio = audit.worst_data_ratio.max(ratio(dg, g_bound));
            if dg > g_bound * (1.0 + slack) + slack {
                audit.data_violations += 1;
            }

            let df = (self.nonlinearity(t, &x, yz[0], &yz[1..]) - self.nonlinearity(t, &x, yz2[0], &yz2[1..])).abs();
            let f_bound: f64 = self.lipschitz_solution.iter().zip(yz.iter().zip(&yz2)).map(|(l, (a, b))| l * (a - b).abs()).sum();
            audit.worst_nonlinearity_ratio = audit.worst_nonlinearity_ratio.max(ratio(df, f_bound));
            if df > f_bound * (1.0 + slack) + slack {
                audit.nonlinearity_violations += 1;
            }
            audit.samples += 1;
        }
        audit
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Outcome of [`PdeProblem::audit_lipschitz`]. Ratios are observed
/// difference over declared bound; anything above one is a violation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LipschitzAudit {
    pub samples: usize,
    pub data_violations: usize,
    pub nonlinearity_violations: usize,
    pub worst_data_ratio: f64,
    pub worst_nonlinearity_ratio: f64,
}

impl LipschitzAudit {
    pub fn passed(&self) -> bool {
        self.data_violations == 0 && self.nonlinearity_violations == 0
    }
}

/// Estimator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    /// Picard depth `n`.
    pub depth: u32,
    /// Monte Carlo base `M`; level `l` averages `M^(n-l)` samples.
    pub base: u32,
    /// Exponent `e` of the time-fraction law `P(r <= b) = b^e`.
    pub time_cdf_exponent: f64,
    pub root_seed: u64,
    pub replications: usize,
}

impl MlpConfig {
    pub fn new(depth: u32, base: u32) -> Self {
        Self {
            depth,
            base,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.root_seed = seed;
        self
    }

    pub fn with_exponent(mut self, e: f64) -> Self {
        self.time_cdf_exponent = e;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            base: 1,
            time_cdf_exponent: 0.5,
            root_seed: 0,
            replications: 1,
        }
    }
}

/// One violated constraint, named by field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("time_cdf_exponent = {0}: must lie strictly inside (0, 1)")]
    ExponentOutOfRange(f64),
    #[error("horizon = {0}: must be positive and finite")]
    NonpositiveHorizon(f64),
    #[error("dimension = 0: must be at least 1")]
    ZeroDimension,
    #[error("base = 0: must be at least 1")]
    ZeroBase,
    #[error("replications = 0: must be at least 1")]
    ZeroReplications,
    #[error("{field} has {found} entries, expected {expected}")]
    LipschitzLength {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{field}[{index}] = {value}: Lipschitz constants must be nonnegative")]
    NegativeLipschitz {
        field: &'static str,
        index: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid problem/config: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors(pub Vec<Violation>);

/// Checks every type invariant of `problem` and `config` and hands the pair
/// back unchanged, or reports all violations at once.
pub fn validate_problem(problem: PdeProblem, config: MlpConfig) -> Result<(PdeProblem, MlpConfig), ValidationErrors> {
    let mut violations = problem_violations(&problem);
    violations.extend(config_violations(&config));
    if violations.is_empty() {
        Ok((problem, config))
    } else {
        Err(ValidationErrors(violations))
    }
}

pub(crate) fn problem_violations(problem: &PdeProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = problem.dimension;
    if d == 0 {
        out.push(Violation::ZeroDimension);
    }
    if !(problem.horizon > 0.0 && problem.horizon.is_finite()) {
        out.push(Violation::NonpositiveHorizon(problem.horizon));
    }
    for (field, values, expected) in [
        ("lipschitz_solution", &problem.lipschitz_solution, d + 1),
        ("lipschitz_space", &problem.lipschitz_space, d),
    ] {
        if values.len() != expected {
            out.push(Violation::LipschitzLength {
                field,
                expected,
                found: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            // NaN fails too
            if !(value >= 0.0) {
                out.push(Violation::NegativeLipschitz { field, index, value });
            }
        }
    }
    out
}

pub(crate) fn config_violations(config: &MlpConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let e = config.time_cdf_exponent;
    if !(e > 0.0 && e < 1.0) {
        out.push(Violation::ExponentOutOfRange(e));
    }
    if config.base == 0 {
        out.push(Violation::ZeroBase);
    }
    if config.replications == 0 {
        out.push(Violation::ZeroReplications);
    }
    out
}

/// Map from the caller's time axis to the canonical backward time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeMap {
    Identity,
    /// Forward time `t ∈ [0, T]` ↦ backward time `2(T − t) ∈ [0, 2T]`.
    ForwardToBackward { forward_horizon: f64 },
}

impl TimeMap {
    pub fn to_canonical(&self, t: f64) -> f64 {
        match *self {
            TimeMap::Identity => t,
            TimeMap::ForwardToBackward { forward_horizon } => 2.0 * (forward_horizon - t),
        }
    }

    pub fn from_canonical(&self, s: f64) -> f64 {
        match *self {
            TimeMap::Identity => s,
            TimeMap::ForwardToBackward { forward_horizon } => forward_horizon - 0.5 * s,
        }
    }
}

/// A backward-convention problem and the time map that produced it.
#[derive(Debug, Clone)]
pub struct CanonicalProblem {
    pub problem: PdeProblem,
    pub time_map: TimeMap,
}

/// Rewrites a forward problem on `[0, T]` as the backward problem on
/// `[0, 2T]` with `f̃(s, x, y, z) = f(T − s/2, x, y, z) / 2` and unchanged
/// data. Backward problems pass through with the identity map.
pub fn to_canonical(problem: &PdeProblem) -> CanonicalProblem {
    match problem.convention {
        TimeConvention::BackwardHalfLaplacian => CanonicalProblem {
            problem: problem.clone(),
            time_map: TimeMap::Identity,
        },
        TimeConvention::ForwardFullLaplacian => {
            let forward_horizon = problem.horizon;
            let inner = Arc::clone(&problem.nonlinearity);
            let nonlinearity: NonlinearityFn =
                Arc::new(move |s, x, y, z| 0.5 * inner(forward_horizon - 0.5 * s, x, y, z));
            CanonicalProblem {
                problem: PdeProblem {
                    dimension: problem.dimension,
                    horizon: 2.0 * forward_horizon,
                    data: Arc::clone(&problem.data),
                    nonlinearity,
                    lipschitz_solution: problem.lipschitz_solution.iter().map(|l| 0.5 * l).collect(),
                    lipschitz_space: problem.lipschitz_space.clone(),
                    convention: TimeConvention::BackwardHalfLaplacian,
                },
                time_map: TimeMap::ForwardToBackward { forward_horizon },
            }
        }
    }
}

/// Multi-index `θ ∈ ∪_k Z^k` naming one independent random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ThetaPath(Vec<i64>);

impl ThetaPath {
    pub fn new(elements: Vec<i64>) -> Self {
        Self(elements)
    }

    /// Single-element path `(k)`, used for top-level replications.
    pub fn root(k: i64) -> Self {
        Self(vec![k])
    }

    /// `(θ, a, b)`.
    pub fn child(&self, a: i64, b: i64) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 2);
        v.extend_from_slice(&self.0);
        v.push(a);
        v.push(b);
        Self(v)
    }

    pub fn elements(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<i64>> for ThetaPath {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_problem(d: usize, horizon: f64) -> PdeProblem {
        PdeProblem::backward(d, horizon, |x| x.iter().sum(), |_, _, _, _| 0.0)
    }

    #[test]
    fn valid_pair_is_returned_unchanged() {
        let cfg = MlpConfig::new(1, 1).with_exponent(0.5);
        let (p, c) = validate_problem(unit_problem(1, 1.0), cfg).unwrap();
        assert_eq!(c, cfg);
        assert_eq!(p.dimension(), 1);
        assert_eq!(p.horizon(), 1.0);
    }

    #[test]
    fn exponent_one_is_rejected() {
        let cfg = MlpConfig::new(1, 1).with_exponent(1.0);
        let err = validate_problem(unit_problem(1, 1.0), cfg).unwrap_err();
        assert_eq!(err.0, vec![Violation::ExponentOutOfRange(1.0)]);
        let err = validate_problem(unit_problem(1, 1.0), cfg.with_exponent(0.0)).unwrap_err();
        assert_eq!(err.0, vec![Violation::ExponentOutOfRange(0.0)]);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let err = validate_problem(unit_problem(1, 0.0), MlpConfig::default()).unwrap_err();
        assert_eq!(err.0, vec![Violation::NonpositiveHorizon(0.0)]);
    }

    #[test]
    fn all_violations_reported_together() {
        let p = PdeProblem::backward(0, -1.0, |_| 0.0, |_, _, _, _| 0.0);
        let cfg = MlpConfig::new(1, 0).with_exponent(2.0);
        let err = validate_problem(p, cfg).unwrap_err();
        assert!(err.0.contains(&Violation::ZeroDimension));
        assert!(err.0.contains(&Violation::NonpositiveHorizon(-1.0)));
        assert!(err.0.contains(&Violation::ExponentOutOfRange(2.0)));
        assert!(err.0.contains(&Violation::ZeroBase));
        assert!(err.to_string().contains("time_cdf_exponent"));
    }

    #[test]
    fn negative_and_misshapen_lipschitz_data() {
        let p = unit_problem(2, 1.0).with_lipschitz(vec![1.0, -0.5, 0.0], vec![1.0]);
        let err = validate_problem(p, MlpConfig::default()).unwrap_err();
        assert!(err.0.iter().any(|v| matches!(v, Violation::NegativeLipschitz { index: 1, .. })));
        assert!(err.0.iter().any(|v| matches!(v, Violation::LipschitzLength { field: "lipschitz_space", .. })));
    }

    #[test]
    fn forward_problem_maps_to_doubled_horizon() {
        let p = PdeProblem::forward(1, 1.0, |x| x[0], |y, z| y + 3.0 * z[0]).with_lipschitz(vec![1.0, 3.0], vec![1.0]);
        let c = to_canonical(&p);
        assert_eq!(c.problem.convention(), TimeConvention::BackwardHalfLaplacian);
        assert_eq!(c.problem.horizon(), 2.0);
        assert_eq!(c.time_map.to_canonical(1.0), 0.0);
        assert_eq!(c.time_map.to_canonical(0.0), 2.0);
        assert_eq!(c.time_map.from_canonical(2.0), 0.0);
        assert_eq!(c.problem.nonlinearity(0.3, &[0.0], 2.0, &[1.0]), 0.5 * (2.0 + 3.0));
        assert_eq!(c.problem.data(&[0.7]), 0.7);
        assert_eq!(c.problem.lipschitz_solution(), &[0.5, 1.5]);
    }

    #[test]
    fn canonicalisation_is_idempotent() {
        let p = PdeProblem::forward(2, 0.5, |x| x[0] * x[1], |y, _| -y);
        let once = to_canonical(&p);
        let twice = to_canonical(&once.problem);
        assert_eq!(twice.time_map, TimeMap::Identity);
        assert_eq!(twice.problem.horizon(), once.problem.horizon());
        for s in [0.0, 0.25, 0.9] {
            let x = [0.3, -1.2];
            assert_eq!(
                twice.problem.nonlinearity(s, &x, 0.4, &[1.0, 2.0]),
                once.problem.nonlinearity(s, &x, 0.4, &[1.0, 2.0])
            );
        }
        let backward = unit_problem(1, 1.0);
        assert_eq!(to_canonical(&backward).time_map, TimeMap::Identity);
    }

    #[test]
    fn forward_time_dependence_is_transported() {
        let p = PdeProblem::forward_time_space(1, 1.5, |_| 0.0, |t, _, _, _| t);
        let c = to_canonical(&p);
        for t in [0.0, 0.4, 1.5] {
            let s = c.time_map.to_canonical(t);
            assert!((c.problem.nonlinearity(s, &[0.0], 0.0, &[0.0]) - 0.5 * t).abs() < 1e-15);
        }
    }

    #[test]
    fn lipschitz_audit_catches_understated_constants() {
        let good = PdeProblem::backward(2, 1.0, |x| x[0].sin() + 0.5 * x[1], |_, _, y, z| 2.0 * y - z[1].tanh())
            .with_lipschitz(vec![2.0, 0.0, 1.0], vec![1.0, 0.5]);
        assert!(good.audit_lipschitz(2000, 3.0, 7).passed());
        let bad = good.clone().with_lipschitz(vec![1.0, 0.0, 1.0], vec![1.0, 0.5]);
        let audit = bad.audit_lipschitz(2000, 3.0, 7);
        assert!(audit.nonlinearity_violations > 0);
        assert!(audit.worst_nonlinearity_ratio > 1.0);
    }

    #[test]
    fn theta_paths_concatenate() {
        let theta = ThetaPath::root(3);
        let child = theta.child(2, -5);
        assert_eq!(child.elements(), &[3, 2, -5]);
        assert!(child.len() > theta.len());
        assert_ne!(theta.child(1, 1), theta.child(-1, 1));
    }
}
