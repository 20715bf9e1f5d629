//! Empirical error tables against exact solutions.

use std::time::Instant;

use super::cases::BenchmarkCase;
use super::HarnessError;
use crate::bounds::{error_bound, m_rule, ErrorBoundInput};
use crate::engine::{replicate_with, EvalOptions, FieldEstimate};
use crate::problem::MlpConfig;
use crate::stats::RunningStats;

/// How `M` follows `n` in a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MRule {
    /// `M = max(1, ⌊n^q⌋)`
    Power(f64),
    Fixed(u32),
}

impl MRule {
    pub fn base(&self, n: u32) -> u32 {
        match *self {
            MRule::Power(q) => m_rule(n, q),
            MRule::Fixed(m) => m,
        }
    }

    pub fn schedule(&self, n_max: u32) -> Vec<(u32, u32)> {
        (1..=n_max).map(|n| (n, self.base(n))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSpec {
    pub schedule: Vec<(u32, u32)>,
    pub replications: usize,
    pub seed: u64,
    pub time_cdf_exponent: f64,
    /// Query point; the time is the case's own query time.
    pub x: Vec<f64>,
    pub record_timing: bool,
    pub options: EvalOptions,
}

impl ConvergenceSpec {
    pub fn new(schedule: Vec<(u32, u32)>, replications: usize, seed: u64, x: Vec<f64>) -> Self {
        Self {
            schedule,
            replications,
            seed,
            time_cdf_exponent: 0.5,
            x,
            record_timing: true,
            options: EvalOptions::from_env(),
        }
    }

    pub fn without_timing(mut self) -> Self {
        self.record_timing = false;
        self
    }
}

/// Squared-error summary of a set of estimates against the exact pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStatistics {
    pub rmse_value: f64,
    pub rmse_grad_max: f64,
    /// `√(rmse_value² + rmse_grad_max²)`
    pub combined: f64,
    /// One-sided 95% upper confidence limit of `combined`, from normal
    /// limits on each mean squared error.
    pub combined_upper_95: f64,
}

const Z_95_ONE_SIDED: f64 = 1.644_853_626_951_472_2;

pub fn error_statistics(estimates: &[FieldEstimate], value: f64, gradient: &[f64]) -> ErrorStatistics {
    let upper = |s: &RunningStats| s.mean() + Z_95_ONE_SIDED * s.std_error();
    let v: RunningStats = estimates.iter().map(|e| (e.value - value).powi(2)).collect();
    let grads: Vec<RunningStats> = (0..gradient.len())
        .map(|i| estimates.iter().map(|e| (e.gradient[i] - gradient[i]).powi(2)).collect())
        .collect();
    let g_mean = grads.iter().map(RunningStats::mean).fold(0.0, f64::max);
    let g_upper = grads.iter().map(upper).fold(0.0, f64::max);
    ErrorStatistics {
        rmse_value: v.mean().sqrt(),
        rmse_grad_max: g_mean.sqrt(),
        combined: (v.mean() + g_mean).sqrt(),
        combined_upper_95: (upper(&v) + g_upper).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub case: String,
    pub n: u32,
    pub m: u32,
    pub replications: usize,
    pub rmse_value: f64,
    pub rmse_grad_max: f64,
    pub combined_error: f64,
    pub combined_upper_95: f64,
    pub error_bound: f64,
    pub draws: u64,
    pub wall_seconds: Option<f64>,
}

/// Error-bound exponent used for tables: `p = 4`, density exponent `1 − e`.
pub fn table_error_bound(case: &BenchmarkCase, n: u32, m: u32, e: f64, x: &[f64]) -> Result<f64, HarnessError> {
    let canon = case.canonical();
    let t = canon.time_map.to_canonical(case.query_time);
    let norms = case.norm_overrides(t, x);
    Ok(error_bound(&ErrorBoundInput {
        p: 4.0,
        alpha: 1.0 - e,
        n,
        m,
        horizon: canon.problem.horizon(),
        t,
        reg: norms.regularity,
        u_norm_override: Some(norms.u_norm),
    })?)
}

/// Rows in schedule order. Replications of every row share the root paths
/// `(1), …, (K)`.
pub fn run_convergence(case: &BenchmarkCase, spec: &ConvergenceSpec) -> Result<Vec<ConvergenceRow>, HarnessError> {
    let canon = case.canonical();
    let t = canon.time_map.to_canonical(case.query_time);
    let (value, gradient) = case.reference(&spec.x);
    let mut rows = Vec::with_capacity(spec.schedule.len());
    for &(n, m) in &spec.schedule {
        let config = MlpConfig::new(n, m)
            .with_seed(spec.seed)
            .with_exponent(spec.time_cdf_exponent)
            .with_replications(spec.replications);
        let start = Instant::now();
        let estimates = replicate_with(&canon.problem, &config, t, &spec.x, &spec.options)?;
        let elapsed = start.elapsed().as_secs_f64();
        let stats = error_statistics(&estimates, value, &gradient);
        let bound = match table_error_bound(case, n, m, spec.time_cdf_exponent, &spec.x) {
            Ok(b) => b,
            Err(HarnessError::Bounds(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        rows.push(ConvergenceRow {
            case: case.name.clone(),
            n,
            m,
            replications: spec.replications,
            rmse_value: stats.rmse_value,
            rmse_grad_max: stats.rmse_grad_max,
            combined_error: stats.combined,
            combined_upper_95: stats.combined_upper_95,
            error_bound: bound,
            draws: estimates.first().map_or(0, |e| e.draws),
            wall_seconds: spec.record_timing.then_some(elapsed),
        });
    }
    Ok(rows)
}
