//! Manufactured benchmarks, convergence studies, the self-test battery and
//! CSV reporting.

pub mod battery;
pub mod cases;
pub mod config;
pub mod convergence;
pub mod report;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::engine::EngineError;

pub use battery::{run_test_battery, BatteryEntry, BatteryHooks, BatteryReport};
pub use cases::{BenchmarkCase, CaseParams, NormOverrides, CASE_NAMES};
pub use config::CaseConfig;
pub use convergence::{error_statistics, run_convergence, ConvergenceRow, ConvergenceSpec, ErrorStatistics, MRule};
pub use report::write_csv;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("unknown case {0:?}; expected one of {CASE_NAMES:?}")]
    UnknownCase(String),
    #[error("case {name}: exact solution fails the PDE residual check (max residual {residual:e})")]
    ResidualCheckFailed { name: String, residual: f64 },
    #[error("case {name}: exact gradient disagrees with finite differences (max error {error:e})")]
    GradientCheckFailed { name: String, error: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
