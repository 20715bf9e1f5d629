//! Key-value (TOML) description of a builtin case and a run.
//!
//! ```toml
//! case = "grad-dependent-sine"
//! dimension = 5
//! lambda = 0.25
//! c = 0.5
//! horizon = 1.0
//! depth = 3
//! base = 2
//! replications = 100
//! seed = 7
//! time_cdf_exponent = 0.5
//! x = [0.0, 0.0, 0.0, 0.0, 0.0]
//! ```
//!
//! Every key except `case` is optional.

use serde::Deserialize;

use super::cases::{BenchmarkCase, CaseParams};
use super::HarnessError;
use crate::problem::MlpConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub case: String,
    pub dimension: Option<usize>,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub horizon: Option<f64>,
    pub depth: Option<u32>,
    pub base: Option<u32>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub time_cdf_exponent: Option<f64>,
    pub x: Option<Vec<f64>>,
}

impl CaseConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let (Some(x), Some(d)) = (&cfg.x, cfg.dimension) {
            if x.len() != d {
                return Err(HarnessError::Config(format!("x has {} coordinates, dimension is {d}", x.len())));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn params(&self) -> CaseParams {
        let base = CaseParams::default();
        CaseParams {
            dimension: self.dimension.or(self.x.as_ref().map(Vec::len)).unwrap_or(base.dimension),
            lambda: self.lambda.unwrap_or(base.lambda),
            c: self.c.unwrap_or(base.c),
            horizon: self.horizon.unwrap_or(base.horizon),
            p: base.p,
        }
    }

    pub fn build_case(&self) -> Result<BenchmarkCase, HarnessError> {
        BenchmarkCase::by_name(&self.case, self.params())
    }

    pub fn mlp_config(&self) -> MlpConfig {
        let d = MlpConfig::default();
        MlpConfig::new(self.depth.unwrap_or(d.depth), self.base.unwrap_or(d.base))
            .with_seed(self.seed.unwrap_or(d.root_seed))
            .with_exponent(self.time_cdf_exponent.unwrap_or(d.time_cdf_exponent))
            .with_replications(self.replications.unwrap_or(d.replications))
    }

    pub fn point(&self) -> Vec<f64> {
        self.x.clone().unwrap_or_else(|| vec![0.0; self.params().dimension])
    }
}
