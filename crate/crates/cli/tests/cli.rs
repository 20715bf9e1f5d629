use std::process::{Command, Output};

fn mlp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlp"))
        .args(args)
        .env_remove("MLP_COST_BUDGET")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn cost_prints_recursion_and_closed_bound() {
    let o = mlp(&["cost", "--d", "5", "--n", "3", "--M", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "RV = 1413\nd(5M)^n = 16875\n");
}

#[test]
fn converge_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec![
            "converge", "--case", "grad-dependent-sine", "--n-max", "3", "--m-rule", "floor-n^1", "--reps", "10",
            "--seed", "5", "--no-timing", "--out",
        ];
        args.push(path.to_str().unwrap());
        args.extend_from_slice(extra);
        let o = mlp(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv", &[]);
    let b = run("b.csv", &["--serial"]);
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "case,n,M,replications,rmse_value,rmse_grad_max,combined_error,error_bound,draws,wall_seconds");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("grad-dependent-sine,3,3,10,") && lines[3].ends_with(",393,NA"));
}

#[test]
fn fixed_rule_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "case = \"grad-free-exponential\"\ndimension = 2\nreplications = 4\nseed = 1\nx = [0.1, 0.2]\n").unwrap();
    let o = mlp(&["converge", "--config", cfg.to_str().unwrap(), "--n-max", "2", "--m-rule", "fixed:2", "--no-timing"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("grad-free-exponential,1,2,4,"));
    assert!(out.contains("grad-free-exponential,2,2,4,"));
    let bad = mlp(&["converge", "--config", cfg.to_str().unwrap(), "--m-rule", "sometimes"]);
    assert!(!bad.status.success());
}

#[test]
fn solve_reports_estimate_and_reference() {
    let o = mlp(&["solve", "--case", "forward-heat", "--n", "2", "--M", "2", "--reps", "5", "--x", "-0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("draws per estimate 28"), "{out}");
    assert!(out.contains("exact -0.615595"), "{out}");
}

#[test]
fn cost_budget_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_mlp"))
        .args(["solve", "--case", "grad-dependent-sine", "--n", "3", "--M", "3"])
        .env("MLP_COST_BUDGET", "10")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("exceeds the budget of 10"));
}

#[test]
fn schedule_and_integrals() {
    let o = mlp(&["schedule", "--eps", "1000", "--case", "grad-free-exponential"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("n = 1\nM = 1\n"));
    let inadmissible = mlp(&["schedule", "--eps", "1", "--case", "grad-free-exponential", "--q", "0.9"]);
    assert!(!inadmissible.status.success());
    let v = mlp(&["verify-integrals"]);
    assert!(v.status.success());
    assert!(!stdout(&v).contains("FAIL"));
}

#[test]
fn quick_battery_exits_cleanly() {
    let o = mlp(&["battery", "--seed", "2024", "--quick"]);
    let out = stdout(&o);
    assert!(o.status.success(), "{out}");
    assert_eq!(out.lines().filter(|l| l.contains("PASS")).count(), 7);
}
