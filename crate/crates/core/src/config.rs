//! Pipeline configuration (TOML).
//!
//! Every field is required; unknown keys are rejected. All randomness is
//! derived from the single top-level `seed`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{derive_seed, streams, DatasetConfig};
use crate::error::{Error, Result};
use crate::model::DeepLstmModel;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_u: usize,
    /// Units per layer, first layer first.
    pub units: Vec<usize>,
    pub n_y: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_u: 1,
            units: vec![8, 8],
            n_y: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<config>"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Toml {
            path: path.to_path_buf(),
            message: describe_toml_error(text, &e),
        })?;
        cfg.validate()?;
        cfg.train.rng_seed = derive_seed(cfg.seed, streams::TRAIN);
        Ok(cfg)
    }

    /// Replaces the top-level seed and everything derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.rng_seed = derive_seed(seed, streams::TRAIN);
        self
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if self.model.units.is_empty() || self.model.units.contains(&0) {
            return Err(Error::Config(format!(
                "model.units must list at least one positive layer width (got {:?})",
                self.model.units
            )));
        }
        if self.model.n_u == 0 || self.model.n_y == 0 {
            return Err(Error::Config("model.n_u and model.n_y must be ≥ 1".into()));
        }
        if self.data.split.t_s != self.train.t_s {
            return Err(Error::Config(format!(
                "data.split.t_s ({}) and train.t_s ({}) differ",
                self.data.split.t_s, self.train.t_s
            )));
        }
        Ok(())
    }

    /// Randomly initialized model of the configured shape.
    pub fn init_model(&self) -> Result<DeepLstmModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, streams::INIT));
        DeepLstmModel::random(self.model.n_u, &self.model.units, self.model.n_y, &mut rng)
    }
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {msg}")
        }
        None => msg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg.with_seed(0));
    }

    #[test]
    fn missing_field_is_named() {
        let text = PipelineConfig::default().to_toml_string().replace("batch_size = 50\n", "");
        let err = PipelineConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("batch_size"), "{err}");
    }

    #[test]
    fn unknown_field_reports_line() {
        let text = format!("bogus = 1\n{}", PipelineConfig::default().to_toml_string());
        let err = PipelineConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("bogus"), "{err}");
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.train.t_s = 100;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seed_drives_init_and_shuffle() {
        let a = PipelineConfig::default().with_seed(1);
        let b = PipelineConfig::default().with_seed(2);
        assert_ne!(a.train.rng_seed, b.train.rng_seed);
        assert_ne!(a.init_model().unwrap(), b.init_model().unwrap());
        assert_eq!(a.init_model().unwrap(), a.clone().init_model().unwrap());
    }
}
