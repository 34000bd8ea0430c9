use std::path::{Path, PathBuf};

use ctecs::circuit::{random_family_instance, InstanceParams};
use ctecs::fourier::NoiseSpec;
use ctecs::{seed, CoefficientSource, CtEcsDecomposition, EstimatorConfig, Family};
use serde::{Deserialize, Serialize};

use crate::fail::{usage, CliResult};
use crate::io;
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaKeyword {
    Measure,
}

/// `α` as an assumed number or `"measure"` for the dense oracle value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaChoice {
    Assume(f64),
    Keyword(AlphaKeyword),
}

impl std::str::FromStr for AlphaChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("measure") {
            return Ok(AlphaChoice::Keyword(AlphaKeyword::Measure));
        }
        s.parse::<f64>().map(AlphaChoice::Assume).map_err(|_| format!("expected a number or \"measure\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Exact,
    Estimator,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceChoice {
    pub kind: Option<SourceKind>,
    pub batch_size: Option<usize>,
    pub batch_count: Option<usize>,
    pub accuracy: Option<f64>,
    pub confidence: Option<f64>,
}

pub const DEFAULT_BATCH_SIZE: usize = 10_000;
pub const DEFAULT_BATCH_COUNT: usize = 9;
pub const DEFAULT_CONFIDENCE: f64 = 0.05;

impl SourceChoice {
    /// Explicit `B`/`K` override the values implied by `τ`/`η`, keeping `τ`
    /// as the tolerance that verification holds the estimates to.
    pub fn resolve(&self, master: u64, dense_cap: usize) -> CliResult<CoefficientSource> {
        match self.kind.unwrap_or(SourceKind::Exact) {
            SourceKind::Exact => Ok(CoefficientSource::Exact { dense_cap }),
            SourceKind::Estimator => {
                let seed = seed::stream_seed(master, "estimator", 0);
                let mut cfg = match self.accuracy {
                    Some(tau) => EstimatorConfig::from_accuracy(tau, self.confidence.unwrap_or(DEFAULT_CONFIDENCE), seed)?,
                    None => EstimatorConfig::new(DEFAULT_BATCH_SIZE, DEFAULT_BATCH_COUNT, seed)?,
                };
                if let Some(b) = self.batch_size {
                    cfg.batch_size = b;
                }
                if let Some(k) = self.batch_count {
                    cfg.batch_count = k;
                }
                cfg.validate()?;
                Ok(CoefficientSource::estimator(cfg))
            }
        }
    }
}

/// `c_max` as a number or `"none"` for the uncapped theory degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CMax {
    Cap(usize),
    Keyword(NoneKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoneKeyword {
    None,
}

impl CMax {
    pub fn get(self) -> Option<usize> {
        match self {
            CMax::Cap(c) => Some(c),
            CMax::Keyword(_) => None,
        }
    }
}

impl std::str::FromStr for CMax {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(CMax::Keyword(NoneKeyword::None));
        }
        s.parse().map(CMax::Cap).map_err(|_| format!("expected a count or \"none\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Lines,
}

/// Everything a run reads. Missing fields fall back to command-line flags,
/// then to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub circuit: Option<PathBuf>,
    pub family: Option<Family>,
    pub n: Option<usize>,
    pub instance: Option<InstanceParams>,
    pub count: Option<usize>,
    pub noise: Option<NoiseSpec>,
    pub alpha: Option<AlphaChoice>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub source: Option<SourceChoice>,
    pub c_max: Option<CMax>,
    pub mask_budget: Option<usize>,
    pub num_samples: Option<usize>,
    pub measured: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub verify: Option<bool>,
}

impl ExperimentConfig {
    pub fn load(global: &Global) -> CliResult<ExperimentConfig> {
        match &global.config {
            Some(path) => from_file(path),
            None => Ok(ExperimentConfig::default()),
        }
    }

    pub fn seed(&self, global: &Global) -> u64 {
        global.seed.or(self.seed).unwrap_or(0)
    }
}

fn from_file(path: &Path) -> CliResult<ExperimentConfig> {
    let value = io::read_json(path)?;
    serde_json::from_value(value).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn parse_family(name: &str) -> CliResult<Family> {
    name.parse::<Family>().map_err(|_| {
        let known: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
        usage(format!("unknown family {name:?}; expected one of {}", known.join(", ")))
    })
}

/// Instance `index` of a seeded batch; `gen` writes exactly these.
pub fn generate(family: Family, n: usize, params: &InstanceParams, master: u64, index: u64) -> CliResult<CtEcsDecomposition> {
    let mut rng = seed::stream(master, "gen", index);
    Ok(random_family_instance(family, n, params, &mut rng)?)
}
