//! Operator configuration: built-in defaults, overridden by a JSON config
//! file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::SynthConfig;
use crate::predictor::DEFAULT_K;
use crate::retrieval::Bm25Params;
use crate::seacat::TrainParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// NoMatch is reported as an error.
    #[default]
    None,
    /// Fall back to the repository-wide mode / median.
    Majority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub k: usize,
    pub fallback: Fallback,
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self { k: DEFAULT_K, fallback: Fallback::None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeacatSection {
    pub n_as: usize,
    pub n_st: usize,
    pub d_model: usize,
    /// Half-width of the rule-2 window around the agent's first sentence.
    pub window: usize,
    pub position_embeddings: bool,
}

impl Default for SeacatSection {
    fn default() -> Self {
        Self { n_as: 64, n_st: 128, d_model: 16, window: 2, position_embeddings: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub repository: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub bm25: Bm25Params,
    pub predictor: PredictorSection,
    pub seacat: SeacatSection,
    pub paths: PathsSection,
    pub train: TrainParams,
    pub synth: SynthConfig,
}

/// Flag values; `None` leaves the lower-precedence value in place.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(short = 'k', long = "k", global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub fallback: Option<Fallback>,
    #[arg(long, global = true)]
    pub n_as: Option<usize>,
    #[arg(long, global = true)]
    pub n_st: Option<usize>,
    #[arg(long, global = true)]
    pub d_model: Option<usize>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub no_position_embeddings: bool,
    #[arg(long = "repository", global = true)]
    pub repository: Option<PathBuf>,
    #[arg(long = "model", global = true)]
    pub model: Option<PathBuf>,
    #[arg(long = "reports", global = true)]
    pub reports: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
}

impl CliConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut self.bm25.alpha, &o.alpha);
        set(&mut self.bm25.beta, &o.beta);
        set(&mut self.predictor.k, &o.k);
        set(&mut self.predictor.fallback, &o.fallback);
        set(&mut self.seacat.n_as, &o.n_as);
        set(&mut self.seacat.n_st, &o.n_st);
        set(&mut self.seacat.d_model, &o.d_model);
        set(&mut self.seacat.window, &o.window);
        if o.no_position_embeddings {
            self.seacat.position_embeddings = false;
        }
        if o.repository.is_some() {
            self.paths.repository = o.repository.clone();
        }
        if o.model.is_some() {
            self.paths.model = o.model.clone();
        }
        if o.reports.is_some() {
            self.paths.reports = o.reports.clone();
        }
        if let Some(seed) = o.seed {
            self.train.seed = seed;
            self.synth.seed = seed;
        }
        set(&mut self.train.lr, &o.lr);
        set(&mut self.train.epochs, &o.epochs);
    }

    /// Defaults, then `file`, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bm25.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.predictor.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        self.synth.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
