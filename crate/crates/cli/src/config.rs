use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use t2c_core::captioner::{FreezePreset, ModelConfig, TrainConfig};
use t2c_core::dataset::CorpusSpec;
use t2c_core::tensor::AdamConfig;

use crate::CliError;

/// Overrides the configured seed when set.
pub const SEED_ENV: &str = "T2C_SEED";

/// Learning rate used by every training command unless overridden.
pub const RUN_LR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub freeze: FreezePreset,
}

impl Default for TrainParams {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainParams {
            epochs: 10,
            batch_size: 16,
            lr: RUN_LR,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            freeze: FreezePreset::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataParams {
    pub standard: usize,
    pub pairs: usize,
}

impl Default for DataParams {
    fn default() -> Self {
        let spec = CorpusSpec::default();
        DataParams {
            standard: spec.standard,
            pairs: spec.pairs,
        }
    }
}

/// Everything a run needs, read from JSON and then overridden by the
/// environment and by flags, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainParams,
    pub data: DataParams,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            train: TrainParams::default(),
            data: DataParams::default(),
            data_dir: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
    }

    /// Defaults, or the file at `path`, with `T2C_SEED` applied.
    pub fn resolve(path: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::User(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        if self.train.batch_size == 0 {
            return Err(CliError::User("train.batch_size must be positive".into()));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(CliError::User(format!("train.lr must be positive, got {}", self.train.lr)));
        }
        if let Some(d) = &self.data_dir {
            if !d.exists() {
                return Err(CliError::User(format!("data_dir {} does not exist", d.display())));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            adam: AdamConfig {
                lr: self.train.lr,
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                eps: self.train.eps,
            },
            freeze: self.train.freeze,
            seed: self.seed,
        }
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            seed: self.seed,
            standard: self.data.standard,
            pairs: self.data.pairs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 4, "model": {"fusion": "concat"}, "train": {"epochs": 2}}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.model.fusion, t2c_core::encoders::FusionKind::Concat);
        assert_eq!(cfg.model.queries, ModelConfig::default().queries);
        assert_eq!((cfg.train.epochs, cfg.train.lr), (2, RUN_LR));
        assert_eq!(cfg.train_config().seed, 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 4}"#).is_err());
    }

    #[test]
    fn baseline_with_query_is_invalid() {
        let cfg: RunConfig = serde_json::from_str(r#"{"model": {"fusion": "baseline", "xattn_query": "image"}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
