//! Self-test battery covering the sampler, the integral identities, the
//! unbiasedness of the recursion, the draw ledger and the convergence trend.

use std::fmt;

use super::cases::{BenchmarkCase, CaseParams, CASE_NAMES};
use super::convergence::{run_convergence, ConvergenceSpec, MRule};
use crate::bounds::cost_rv;
use crate::engine::{evaluate_with, replicate_with, EvalOptions};
use crate::integrals::{
    iterated_integral_closed, iterated_integral_lower_bound, iterated_integral_quadrature, iterated_integral_upper_bound,
    wendel, IteratedIntegralSpec,
};
use crate::problem::{MlpConfig, PdeProblem, ThetaPath};
use crate::sampler::{single_step_second_moment, DrawLedger, PathDigest};
use crate::stats::{ks_critical_1pct, ks_statistic, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatteryHooks {
    /// Run the engine with the wrong importance weight `τ r/e`.
    pub corrupt_time_weight: bool,
    /// Exponent used by the second-moment diagnostic instead of ½.
    pub exponent_override: Option<f64>,
    /// Divide Monte Carlo sample sizes by ten.
    pub quick: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryEntry {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatteryReport {
    pub entries: Vec<BatteryEntry>,
}

impl BatteryReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&BatteryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

impl fmt::Display for BatteryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{:<22} {}  {}", e.name, if e.passed { "PASS" } else { "FAIL" }, e.detail)?;
        }
        Ok(())
    }
}

pub fn run_test_battery(seed: u64, hooks: BatteryHooks) -> BatteryReport {
    let scale = if hooks.quick { 10 } else { 1 };
    let options = EvalOptions {
        corrupt_time_weight: hooks.corrupt_time_weight,
        ..EvalOptions::from_env()
    };
    let entries = vec![
        sampler_law(seed, 100_000 / scale),
        second_moment(seed, hooks.exponent_override.unwrap_or(0.5), 1_000_000 / scale),
        integral_identity(),
        integral_ordering(),
        unbiasedness_ladder(seed, 100_000 / scale, &options),
        cost_ledger(seed, &options),
        convergence_trend(seed, &options),
    ];
    BatteryReport { entries }
}

fn sampler_law(seed: u64, n: usize) -> BatteryEntry {
    let mut worst = 0.0f64;
    let mut passed = true;
    for (k, &e) in [0.3, 0.5, 0.7].iter().enumerate() {
        let mut stream = PathDigest::new(seed).child(-7, k as i64).stream();
        let mut ledger = DrawLedger::default();
        let draws: Vec<f64> = (0..n).map(|_| stream.time_fraction(e, &mut ledger)).collect();
        let ratio = ks_statistic(&draws, |b| b.clamp(0.0, 1.0).powf(e)) / ks_critical_1pct(n);
        worst = worst.max(ratio);
        passed &= ratio < 1.0;
    }
    BatteryEntry {
        name: "sampler-ks",
        passed,
        detail: format!("max KS / critical = {worst:.3} ({n} draws per exponent)"),
    }
}

fn second_moment(seed: u64, e: f64, n: usize) -> BatteryEntry {
    let diag = single_step_second_moment(1.0, e, 1, n, seed);
    let target = 1.0 / (e * (1.0 - e));
    let z = (diag.gradient_moments[0] - target).abs() / diag.standard_errors[0];
    BatteryEntry {
        name: "second-moment",
        passed: z < 3.0 && !diag.heavy_tail,
        detail: format!(
            "e = {e}: {:.4} vs {target:.4} ({z:.2}σ){}",
            diag.gradient_moments[0],
            if diag.heavy_tail { ", heavy tail" } else { "" }
        ),
    }
}

fn integral_identity() -> BatteryEntry {
    let mut worst = 0.0f64;
    let mut failure = None;
    for &alpha in &[0.3, 0.5, 0.7] {
        for &(beta, gamma) in &[(1.0, 1.0), (0.5, 1.0), (1.5, 2.0)] {
            if beta >= alpha * gamma + 1.0 {
                continue;
            }
            for j in 1..=3 {
                let s = IteratedIntegralSpec::new(j, alpha, beta, gamma, 1.0, 0.0);
                match (iterated_integral_closed(&s), iterated_integral_quadrature(&s, 1e-8)) {
                    (Ok(c), Ok(q)) => worst = worst.max((c - q).abs() / c),
                    (c, q) => failure = Some(format!("{s:?}: {c:?} / {q:?}")),
                }
            }
        }
    }
    BatteryEntry {
        name: "integral-identity",
        passed: failure.is_none() && worst < 1e-6,
        detail: failure.unwrap_or_else(|| format!("max relative gap {worst:.2e}")),
    }
}

fn integral_ordering() -> BatteryEntry {
    let mut ok = true;
    let mut checks = 0;
    for &alpha in &[0.3, 0.5, 0.7] {
        for j in 1..=3 {
            // β = γ = 1 lies in [αγ, αγ+1] for every α here.
            let s = IteratedIntegralSpec::new(j, alpha, 1.0, 1.0, 1.0, 0.0);
            let (lo, c, hi) = (
                iterated_integral_lower_bound(j - 1, 1.0, 0.0),
                iterated_integral_closed(&s),
                iterated_integral_upper_bound(&s),
            );
            ok &= matches!((lo, c, hi), (Ok(lo), Ok(c), Ok(hi)) if lo <= c * (1.0 + 1e-12) && c <= hi * (1.0 + 1e-12));
            checks += 1;
        }
    }
    for &x in &[0.5, 1.0, 5.0] {
        for &s in &[0.0, 0.5, 1.0] {
            let (l, r) = wendel(x, s).expect("valid grid");
            ok &= l <= r * (1.0 + 1e-14);
            if s != 0.5 {
                ok &= (l - r).abs() <= 1e-12 * r;
            }
            checks += 1;
        }
    }
    BatteryEntry {
        name: "integral-ordering",
        passed: ok,
        detail: format!("{checks} checks"),
    }
}

/// Mean of `g(x+√τ Z)(1, Z/√τ) + w'(r) f(s, ξ, V(s, ξ))(1, Z'/√(τ r))` where
/// `V` is a fresh depth-`(n−1)` estimate, `r` has CDF `b^{e'}` and `w'` is its
/// inverse density.
fn feynman_kac_rhs(problem: &PdeProblem, depth: u32, base: u32, t: f64, x: &[f64], samples: usize, seed: u64) -> Vec<RunningStats> {
    const ORACLE_EXPONENT: f64 = 0.3;
    let d = problem.dimension();
    let tau = problem.horizon() - t;
    let mut stats = vec![RunningStats::default(); d + 1];
    let root = PathDigest::new(seed);
    let inner = MlpConfig::new(depth - 1, base).with_seed(seed.wrapping_add(0x9e37_79b9));
    let mut ledger = DrawLedger::default();
    for k in 0..samples {
        let mut stream = root.push(k as i64).stream();
        let z = stream.gaussian(d, &mut ledger);
        let shifted: Vec<f64> = x.iter().zip(&z).map(|(x, z)| x + tau.sqrt() * z).collect();
        let g = problem.data(&shifted);

        let r = stream.time_fraction(ORACLE_EXPONENT, &mut ledger);
        let z2 = stream.gaussian(d, &mut ledger);
        let s = t + tau * r;
        let xi: Vec<f64> = x.iter().zip(&z2).map(|(x, z)| x + (tau * r).sqrt() * z).collect();
        let w = tau * r.powf(1.0 - ORACLE_EXPONENT) / ORACLE_EXPONENT;
        let f = if depth == 1 {
            problem.nonlinearity(s, &xi, 0.0, &vec![0.0; d])
        } else {
            let v = evaluate_with(problem, &inner, &ThetaPath::root(k as i64 + 1), s, &xi, &EvalOptions::default())
                .expect("inner estimate");
            problem.nonlinearity(s, &xi, v.value, &v.gradient)
        };
        stats[0].push(g + w * f);
        for i in 0..d {
            stats[i + 1].push(g * z[i] / tau.sqrt() + w * f * z2[i] / (tau * r).sqrt());
        }
    }
    stats
}

fn unbiasedness_ladder(seed: u64, samples: usize, options: &EvalOptions) -> BatteryEntry {
    let case = BenchmarkCase::by_name("grad-dependent-sine", CaseParams::default()).expect("builtin case");
    let problem = case.problem.clone();
    let x = [0.3];
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for n in 1..=2u32 {
        let config = MlpConfig::new(n, 2).with_seed(seed).with_replications(samples);
        let estimates = match replicate_with(&problem, &config, 0.0, &x, options) {
            Ok(v) => v,
            Err(e) => {
                return BatteryEntry {
                    name: "unbiasedness-ladder",
                    passed: false,
                    detail: e.to_string(),
                }
            }
        };
        let lhs = [
            estimates.iter().map(|e| e.value).collect::<RunningStats>(),
            estimates.iter().map(|e| e.gradient[0]).collect::<RunningStats>(),
        ];
        let rhs = feynman_kac_rhs(&problem, n, 2, 0.0, &x, samples, seed ^ 0x0a11_ce00);
        for (l, r) in lhs.iter().zip(&rhs) {
            let z = (l.mean() - r.mean()).abs() / l.std_error().hypot(r.std_error());
            worst = worst.max(z);
        }
        detail.push(format!("n={n}: value {:.4}/{:.4}", lhs[0].mean(), rhs[0].mean()));
    }
    BatteryEntry {
        name: "unbiasedness-ladder",
        passed: worst < 4.0,
        detail: format!("{} (max {worst:.2}σ)", detail.join(", ")),
    }
}

fn cost_ledger(seed: u64, options: &EvalOptions) -> BatteryEntry {
    let mut mismatches = Vec::new();
    let mut checks = 0;
    for d in [1usize, 3] {
        let case = BenchmarkCase::by_name("grad-dependent-sine", CaseParams::default().with_dimension(d)).expect("builtin case");
        for n in 1..=3 {
            for m in 1..=3 {
                let config = MlpConfig::new(n, m).with_seed(seed);
                let predicted = cost_rv(d, n, m).expect("small grid");
                match evaluate_with(&case.problem, &config, &ThetaPath::root(1), 0.0, &vec![0.1; d], options) {
                    Ok(e) if e.draws as u128 == predicted => {}
                    Ok(e) => mismatches.push(format!("(d={d},n={n},M={m}): {} vs {predicted}", e.draws)),
                    Err(e) => mismatches.push(e.to_string()),
                }
                checks += 1;
            }
        }
    }
    BatteryEntry {
        name: "cost-ledger",
        passed: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("{checks} grid points exact")
        } else {
            mismatches.join("; ")
        },
    }
}

fn convergence_trend(seed: u64, options: &EvalOptions) -> BatteryEntry {
    const SLACK: f64 = 1.5;
    let mut failures = Vec::new();
    for name in CASE_NAMES {
        let case = BenchmarkCase::by_name(name, CaseParams::default()).expect("builtin case");
        let mut spec = ConvergenceSpec::new(MRule::Power(1.0).schedule(4), 100, seed, vec![0.0]).without_timing();
        spec.options = *options;
        match run_convergence(&case, &spec) {
            Ok(rows) => {
                for w in rows.windows(2) {
                    if w[1].combined_error > SLACK * w[0].combined_error {
                        failures.push(format!("{name} n={}: {:.4} > 1.5 × {:.4}", w[1].n, w[1].combined_error, w[0].combined_error));
                    }
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    BatteryEntry {
        name: "convergence-trend",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "cases 1-4, d = 1, M = n, n = 1..4".to_string()
        } else {
            failures.join("; ")
        },
    }
}
