//! TOML-backed model and training configuration, plus the config hash
//! embedded in checkpoints.

use crate::adapters::SwinEncoderConfig;
use crate::error::{Error, Result};
use crate::frequency::SigmaBounds;
use crate::losses::LossWeights;
use crate::network::NetworkConfig;
use crate::params::TuningMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

fn default_lr() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    1
}
fn default_epochs() -> usize {
    60
}
fn default_image_size() -> usize {
    384
}

/// Documented model keys: channels, depths, heads, window, k, n_agents,
/// sigma bounds, tuning mode. Defaults are the desk-scale tiny setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: Vec<usize>,
    pub depths: Vec<usize>,
    pub heads: usize,
    pub window: usize,
    pub mlp_ratio: usize,
    pub decoder_k: usize,
    pub decoder_heads: usize,
    pub decoder_window: usize,
    pub n_agents: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub tuning_mode: TuningMode,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        let net = NetworkConfig::default();
        ModelConfig {
            channels: net.encoder.channels,
            depths: net.encoder.depths,
            heads: net.encoder.heads,
            window: net.encoder.window,
            mlp_ratio: net.encoder.mlp_ratio,
            decoder_k: net.decoder_k,
            decoder_heads: net.decoder_heads,
            decoder_window: net.decoder_window,
            n_agents: net.n_agents,
            sigma_min: net.sigma_bounds.min,
            sigma_max: net.sigma_bounds.max,
            tuning_mode: TuningMode::Mona,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.depths.len() {
            return Err(Error::Config(
                "channels and depths must be non-empty and equal length".into(),
            ));
        }
        if self.decoder_k == 0 {
            return Err(Error::Config("decoder_k must be >= 1".into()));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return Err(Error::Config("need 0 < sigma_min < sigma_max".into()));
        }
        Ok(())
    }

    pub fn to_network_config(&self) -> NetworkConfig {
        NetworkConfig {
            encoder: SwinEncoderConfig {
                channels: self.channels.clone(),
                depths: self.depths.clone(),
                heads: self.heads,
                window: self.window,
                mlp_ratio: self.mlp_ratio,
                n_agents: self.n_agents,
            },
            decoder_k: self.decoder_k,
            decoder_heads: self.decoder_heads,
            decoder_window: self.decoder_window,
            n_agents: self.n_agents,
            sigma_bounds: SigmaBounds {
                min: self.sigma_min,
                max: self.sigma_max,
            },
            mode: self.tuning_mode,
        }
    }

    /// SHA-256 over the canonical JSON form, hex-encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Training keys; loss weights mirror the objective's symbols.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    #[serde(rename = "learning_rate")]
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub image_size: usize,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for TrainSettings {
    fn default() -> TrainSettings {
        let w = LossWeights::default();
        TrainSettings {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            image_size: default_image_size(),
            seed: 0,
            alpha: w.alpha,
            beta: w.beta,
            lambda1: w.lambda1,
            lambda2: w.lambda2,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            omega: [1.0; 5],
        }
    }
}

/// Top-level config file: `[model]` and `[train]` tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainSettings,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_hash_is_stable() {
        let cfg = Config::default();
        cfg.model.validate().unwrap();
        cfg.train.validate().unwrap();
        assert_eq!(cfg.model.hash(), cfg.model.hash());
        let mut other = cfg.model.clone();
        other.decoder_k += 1;
        assert_ne!(cfg.model.hash(), other.hash());
    }

    #[test]
    fn toml_roundtrip_with_overrides() {
        let text = r#"
            [model]
            channels = [8, 16]
            depths = [1, 1]
            window = 4
            decoder_window = 4
            tuning_mode = "fft"

            [train]
            learning_rate = 0.001
            epochs = 2
            lambda1 = 0.05
        "#;
        let cfg: Config = toml::from_str(text).unwrap();
        assert_eq!(cfg.model.channels, vec![8, 16]);
        assert_eq!(cfg.model.tuning_mode, TuningMode::Fft);
        assert_eq!(cfg.train.epochs, 2);
        assert!((cfg.train.loss_weights().lambda1 - 0.05).abs() < 1e-12);
        // untouched keys keep defaults
        assert!((cfg.train.loss_weights().alpha - 0.3).abs() < 1e-12);
        assert_eq!(cfg.train.batch_size, 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut m = ModelConfig::default();
        m.decoder_k = 0;
        assert!(m.validate().is_err());
        m = ModelConfig::default();
        m.sigma_min = 0.0;
        assert!(m.validate().is_err());
        let mut t = TrainSettings::default();
        t.learning_rate = 0.0;
        assert!(t.validate().is_err());
    }
}
