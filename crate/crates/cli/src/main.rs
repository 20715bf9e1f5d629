use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mlp_core::bounds::{cost_bound_closed, cost_rv, schedule, ScheduleRequest};
use mlp_core::engine::{replicate_with, EvalOptions, COST_BUDGET_ENV};
use mlp_core::harness::{
    error_statistics, run_convergence, run_test_battery, write_csv, BatteryHooks, CaseConfig,
    ConvergenceSpec, MRule,
};
use mlp_core::integrals::{
    iterated_integral_closed, iterated_integral_lower_bound, iterated_integral_quadrature, iterated_integral_upper_bound,
    wendel, IteratedIntegralSpec,
};
use mlp_core::stats::RunningStats;

#[derive(Parser)]
#[command(name = "mlp", version, about = "Multilevel Picard solver for semilinear heat equations")]
struct Cli {
    /// Ceiling on predicted scalar draws per evaluation.
    #[arg(long, global = true, env = COST_BUDGET_ENV)]
    cost_budget: Option<u128>,
    /// Run replications on one thread.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate (u, ∇u) at one point of a builtin case.
    Solve(SolveArgs),
    /// Error table over a depth schedule, written as CSV.
    Converge(ConvergeArgs),
    /// Check the iterated-integral identities and bounds on a fixed grid.
    VerifyIntegrals,
    /// Predicted scalar draws of one evaluation.
    Cost {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: u32,
        #[arg(long = "M")]
        m: u32,
    },
    /// Smallest depth whose a-priori bound reaches a target error.
    Schedule(ScheduleArgs),
    /// Run the statistical self-test battery.
    Battery {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Use a tenth of the Monte Carlo samples.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Args, Clone)]
struct CaseArgs {
    /// TOML file with case and run parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "case")]
    case: Option<String>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Exponent e of the time-fraction law.
    #[arg(long)]
    exponent: Option<f64>,
    /// Query point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
}

impl CaseArgs {
    fn resolve(&self) -> Result<CaseConfig> {
        let mut cfg = match &self.config {
            Some(path) => CaseConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => CaseConfig::parse(&format!(
                "case = {:?}",
                self.case.as_deref().context("--case or --config is required")?
            ))?,
        };
        if let Some(c) = &self.case {
            cfg.case = c.clone();
        }
        cfg.dimension = self.dimension.or(cfg.dimension);
        cfg.lambda = self.lambda.or(cfg.lambda);
        cfg.c = self.c.or(cfg.c);
        cfg.horizon = self.horizon.or(cfg.horizon);
        cfg.seed = self.seed.or(cfg.seed);
        cfg.replications = self.reps.or(cfg.replications);
        cfg.time_cdf_exponent = self.exponent.or(cfg.time_cdf_exponent);
        cfg.x = self.x.clone().or(cfg.x);
        if let (Some(x), Some(d)) = (&cfg.x, cfg.dimension) {
            if x.len() != d {
                bail!("x has {} coordinates, dimension is {d}", x.len());
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long = "M")]
    m: Option<u32>,
    /// Query time in the case's own convention; defaults to its query time.
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, default_value_t = 4)]
    n_max: u32,
    /// `floor-n^q` or `fixed:M`.
    #[arg(long, default_value = "floor-n^1")]
    m_rule: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write NA in the timing column so equal seeds give identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long = "case")]
    case: String,
    #[arg(long, default_value_t = 1)]
    dimension: usize,
    /// M = ⌊n^q⌋.
    #[arg(long, default_value_t = 0.25)]
    q: f64,
    #[arg(long, default_value_t = 0.5)]
    exponent: f64,
    #[arg(long, default_value_t = 4.0)]
    p: f64,
}

fn parse_m_rule(text: &str) -> Result<MRule> {
    if let Some(m) = text.strip_prefix("fixed:") {
        let m: u32 = m.parse().with_context(|| format!("bad M in {text:?}"))?;
        return Ok(MRule::Fixed(m));
    }
    if let Some(q) = text.strip_prefix("floor-n^") {
        let q: f64 = q.parse().with_context(|| format!("bad q in {text:?}"))?;
        return Ok(MRule::Power(q));
    }
    bail!("unknown M rule {text:?}; use floor-n^q or fixed:M")
}

fn options(cli: &Cli) -> EvalOptions {
    let mut o = EvalOptions::from_env();
    if let Some(b) = cli.cost_budget {
        o.cost_budget = b;
    }
    o.parallel = !cli.serial;
    o
}

fn solve(args: &SolveArgs, options: &EvalOptions) -> Result<()> {
    let mut cfg = args.case.resolve()?;
    cfg.depth = args.n.or(cfg.depth);
    cfg.base = args.m.or(cfg.base);
    let case = cfg.build_case()?;
    let config = cfg.mlp_config();
    let x = cfg.point();
    let canon = case.canonical();
    let t_case = args.t.unwrap_or(case.query_time);
    let t = canon.time_map.to_canonical(t_case);
    let est = replicate_with(&canon.problem, &config, t, &x, options)?;
    let (value, gradient) = case.exact(t_case, &x);
    let stats = error_statistics(&est, value, &gradient);
    let mut out = io::stdout().lock();
    writeln!(out, "case {} d={} n={} M={} replications={}", case.name, x.len(), config.depth, config.base, est.len())?;
    let v: RunningStats = est.iter().map(|e| e.value).collect();
    writeln!(out, "u      {:+.6} ± {:.6}   exact {:+.6}", v.mean(), v.std_error(), value)?;
    for (i, g) in gradient.iter().enumerate() {
        let s: RunningStats = est.iter().map(|e| e.gradient[i]).collect();
        writeln!(out, "du/dx{:<2} {:+.6} ± {:.6}   exact {:+.6}", i + 1, s.mean(), s.std_error(), g)?;
    }
    writeln!(out, "draws per estimate {}", est.first().map_or(0, |e| e.draws))?;
    writeln!(out, "combined rms error {:.6}", stats.combined)?;
    Ok(())
}

fn converge(args: &ConvergeArgs, options: &EvalOptions) -> Result<()> {
    let cfg = args.case.resolve()?;
    let case = cfg.build_case()?;
    let run = cfg.mlp_config();
    let rule = parse_m_rule(&args.m_rule)?;
    let mut spec = ConvergenceSpec::new(rule.schedule(args.n_max), cfg.replications.unwrap_or(100), run.root_seed, cfg.point());
    spec.time_cdf_exponent = run.time_cdf_exponent;
    spec.options = *options;
    if args.no_timing {
        spec = spec.without_timing();
    }
    let rows = run_convergence(&case, &spec)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&rows, BufWriter::new(file))?;
        }
        None => write_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn verify_integrals() -> Result<bool> {
    let mut out = io::stdout().lock();
    let mut all = true;
    writeln!(out, "{:>2} {:>4} {:>4} {:>4} {:>14} {:>14} {:>9} {:>14}  result", "j", "α", "β", "γ", "closed", "quadrature", "rel gap", "upper")?;
    for j in 1..=3 {
        for alpha in [0.3, 0.5, 0.7] {
            for (beta, gamma) in [(1.0, 1.0), (0.5, 1.0), (1.5, 2.0)] {
                let s = IteratedIntegralSpec::new(j, alpha, beta, gamma, 1.0, 0.0);
                let closed = iterated_integral_closed(&s)?;
                let quad = iterated_integral_quadrature(&s, 1e-9)?;
                let gap = ((closed - quad) / closed).abs();
                let upper = iterated_integral_upper_bound(&s).ok();
                let lower = (beta == 1.0 && gamma == 1.0).then(|| iterated_integral_lower_bound(j - 1, 1.0, 0.0)).transpose()?;
                let ok = gap <= 1e-6 && upper.is_none_or(|u| closed <= u) && lower.is_none_or(|l| l <= closed);
                all &= ok;
                writeln!(
                    out,
                    "{j:>2} {alpha:>4} {beta:>4} {gamma:>4} {closed:>14.8e} {quad:>14.8e} {gap:>9.1e} {:>14}  {}",
                    upper.map_or("n/a".to_string(), |u| format!("{u:.8e}")),
                    if ok { "PASS" } else { "FAIL" }
                )?;
            }
        }
    }
    for x in [0.5, 1.0, 5.0] {
        for s in [0.0, 0.5, 1.0] {
            let (l, r) = wendel(x, s)?;
            let ok = l <= r * (1.0 + 1e-14);
            all &= ok;
            writeln!(out, "wendel x={x} s={s}: {l:.12} ≤ {r:.12}  {}", if ok { "PASS" } else { "FAIL" })?;
        }
    }
    Ok(all)
}

fn schedule_cmd(args: &ScheduleArgs) -> Result<()> {
    let cfg = CaseConfig::parse(&format!("case = {:?}\ndimension = {}", args.case, args.dimension))?;
    let case = cfg.build_case()?;
    let canon = case.canonical();
    let t = canon.time_map.to_canonical(case.query_time);
    let x = cfg.point();
    let norms = case.norm_overrides(t, &x);
    let s = schedule(&ScheduleRequest {
        target_eps: args.eps,
        dimension: args.dimension,
        reg: norms.regularity,
        p: args.p,
        alpha: 1.0 - args.exponent,
        m_exponent: args.q,
        horizon: canon.problem.horizon(),
        t,
        u_norm_override: Some(norms.u_norm),
    })?;
    println!("n = {}", s.depth);
    println!("M = {}", s.base);
    println!("error bound = {:e}", s.bound);
    match s.predicted_cost {
        Some(c) => println!("predicted draws = {c}"),
        None => println!("predicted draws overflow 128 bits"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = options(&cli);
    let result = match &cli.command {
        Command::Solve(a) => solve(a, &opts).map(|_| true),
        Command::Converge(a) => converge(a, &opts).map(|_| true),
        Command::VerifyIntegrals => verify_integrals(),
        Command::Cost { d, n, m } => (|| {
            println!("RV = {}", cost_rv(*d, *n, *m)?);
            println!("d(5M)^n = {}", cost_bound_closed(*d, *n, *m)?);
            Ok(true)
        })(),
        Command::Schedule(a) => schedule_cmd(a).map(|_| true),
        Command::Battery { seed, quick } => {
            let report = run_test_battery(
                *seed,
                BatteryHooks {
                    quick: *quick,
                    ..BatteryHooks::default()
                },
            );
            print!("{report}");
            Ok(report.passed())
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
