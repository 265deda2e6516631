//! TOML run configuration. Grammar and defaults: `docs/config.md`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use corrbern::montecarlo::{ExperimentPlan, Retain, DEFAULT_MEMORY_CAP, DEFAULT_SHARD_SIZE};
use corrbern::process::{checkpoints, ModelParams};
use corrbern::verify::SuiteConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub theta: f64,
    pub p: f64,
    /// Defaults to `p`.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointRule {
    Geometric,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub horizon: u64,
    /// Explicit checkpoint list; overrides `checkpoint_rule`.
    pub checkpoints: Option<Vec<u64>>,
    pub checkpoint_rule: CheckpointRule,
    pub n0: u64,
    pub ratio: f64,
    pub replicates: u64,
    pub master_seed: u64,
    pub retain: Retain,
    pub shard_size: u64,
    pub memory_cap: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            horizon: 1000,
            checkpoints: None,
            checkpoint_rule: CheckpointRule::Geometric,
            n0: 10,
            ratio: 1.2,
            replicates: 1000,
            master_seed: 0,
            retain: Retain::SummariesOnly,
            shard_size: DEFAULT_SHARD_SIZE,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            format: Format::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub verify: SuiteConfig,
    #[serde(default)]
    pub output: OutputSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let m = &self.model;
        Ok(ModelParams::new(m.theta, m.p, m.alpha.unwrap_or(m.p))?)
    }

    pub fn checkpoints(&self) -> Result<Vec<u64>, CliError> {
        let e = &self.experiment;
        let list = match (&e.checkpoints, e.checkpoint_rule) {
            (Some(list), _) => checkpoints::validate(list, e.horizon)?,
            (None, CheckpointRule::Dense) => checkpoints::dense(e.horizon),
            (None, CheckpointRule::Geometric) => checkpoints::geometric(e.n0.min(e.horizon), e.ratio, e.horizon)?,
        };
        Ok(list)
    }

    pub fn plan(&self) -> Result<ExperimentPlan, CliError> {
        let e = &self.experiment;
        let plan = ExperimentPlan::new(
            self.params()?,
            e.horizon,
            &self.checkpoints()?,
            e.replicates,
            e.master_seed,
            e.retain,
        )
        .and_then(|p| p.with_shard_size(e.shard_size))
        .and_then(|p| p.with_memory_cap(e.memory_cap));
        Ok(plan?)
    }
}
