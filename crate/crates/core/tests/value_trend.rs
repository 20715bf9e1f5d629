//! Value error along the `M = ⌊n^{1/4}⌋` schedule for every builtin case.

use mlp_core::harness::{run_convergence, BenchmarkCase, CaseParams, ConvergenceSpec, MRule, CASE_NAMES};

#[test]
fn value_error_is_nonincreasing_up_to_slack() {
    let mut failures = Vec::new();
    for name in CASE_NAMES {
        let case = BenchmarkCase::by_name(name, CaseParams::default()).unwrap();
        let spec = ConvergenceSpec::new(MRule::Power(0.25).schedule(5), 100, 31, vec![0.0]).without_timing();
        let rows = run_convergence(&case, &spec).unwrap();
        let errors: Vec<f64> = rows.iter().map(|r| r.rmse_value).collect();
        if errors.windows(2).any(|w| w[1] > 1.5 * w[0]) {
            failures.push(format!("{name}: {errors:.4?}"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn combined_error_trend_in_five_dimensions() {
    let case = BenchmarkCase::by_name("grad-dependent-sine", CaseParams::default().with_dimension(5)).unwrap();
    let mut failures = Vec::new();
    for rule in [MRule::Power(0.25), MRule::Power(1.0)] {
        let spec = ConvergenceSpec::new(rule.schedule(5), 100, 31, vec![0.0; 5]).without_timing();
        let errors: Vec<f64> = run_convergence(&case, &spec).unwrap().iter().map(|r| r.combined_error).collect();
        if errors.windows(2).any(|w| w[1] > 1.5 * w[0]) {
            failures.push(format!("{rule:?}: {errors:.4?}"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
