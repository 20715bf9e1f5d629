//! Full-history recursive multilevel Picard (MLP) approximation for semilinear
//! heat equations whose nonlinearity depends on the solution and its gradient.
//!
//! The crate estimates the pair `(u(t, x), ∇u(t, x))` at a single space-time
//! point, counts every scalar random variable it consumes, and ships the
//! analytic machinery needed to check the estimator: closed forms and
//! quadrature for the iterated integrals that govern its variance, a-priori
//! error and cost bounds, and a set of manufactured benchmarks.
//!
//! Module map:
//!
//! * [`problem`]: problem/config types, validation, time-convention adapter.
//! * [`sampler`]: `(seed, path)`-addressed random streams and draw accounting.
//! * [`engine`]: the recursive estimator, replication and RMSE.
//! * [`integrals`]: iterated-integral identities, bounds and quadrature.
//! * [`bounds`]: error bound, regularity bounds, cost recursion, schedules.
//! * [`harness`]: benchmark cases, convergence studies, test battery, CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod engine;
pub mod harness;
pub mod integrals;
pub mod problem;
pub mod quadrature;
pub mod sampler;
pub mod stats;

pub use engine::{evaluate, replicate, rmse, EngineError, EvalOptions, FieldEstimate, Rmse};
pub use problem::{
    to_canonical, validate_problem, CanonicalProblem, MlpConfig, PdeProblem, ThetaPath, TimeConvention,
    TimeMap, Violation,
};
pub use sampler::{DrawLedger, RandomStream, StreamKey};
