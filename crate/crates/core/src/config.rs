//! Flat `key = value` pipeline configuration.
//!
//! ```text
//! # comments start with '#'
//! iterations = 4000
//! learning_rate = 0.001
//! normalization = symmetric
//! ```
//!
//! Unknown keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::Task;
use crate::embedding::Normalization;
use crate::mlp::{Activation, AdamHyper};
use crate::preprocess::AugmentParams;
use crate::train::TrainConfig;

/// Seed used when neither a flag, `LESION_SEED` nor the config sets one.
pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "LESION_SEED";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    BadValue { line: usize, key: String, value: String },
    #[error("`{key}`: {message}")]
    OutOfDomain { key: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub crop_fraction: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub brightness_factor: f64,
    pub augment_fraction: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub log_every: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub normalization: Normalization,
    pub hidden_activation: Activation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let aug = AugmentParams::default();
        let adam = AdamHyper::default();
        Self {
            crop_fraction: aug.crop_fraction,
            scale_min: aug.scale_min,
            scale_max: aug.scale_max,
            brightness_factor: aug.brightness_factor as f64,
            augment_fraction: 0.2,
            iterations: 4000,
            batch_size: 32,
            log_every: 10,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: DEFAULT_SEED,
            normalization: Normalization::Symmetric,
            hidden_activation: Activation::Relu,
        }
    }
}

pub const KEYS: [&str; 15] = [
    "crop_fraction",
    "scale_min",
    "scale_max",
    "brightness_factor",
    "augment_fraction",
    "iterations",
    "batch_size",
    "log_every",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "seed",
    "normalization",
    "hidden_activation",
];

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl PipelineConfig {
    /// Parses a config file over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.set(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "crop_fraction" => self.crop_fraction = parse_value(line, key, v)?,
            "scale_min" => self.scale_min = parse_value(line, key, v)?,
            "scale_max" => self.scale_max = parse_value(line, key, v)?,
            "brightness_factor" => self.brightness_factor = parse_value(line, key, v)?,
            "augment_fraction" => self.augment_fraction = parse_value(line, key, v)?,
            "iterations" => self.iterations = parse_value(line, key, v)?,
            "batch_size" => self.batch_size = parse_value(line, key, v)?,
            "log_every" => self.log_every = parse_value(line, key, v)?,
            "learning_rate" => self.learning_rate = parse_value(line, key, v)?,
            "beta1" => self.beta1 = parse_value(line, key, v)?,
            "beta2" => self.beta2 = parse_value(line, key, v)?,
            "epsilon" => self.epsilon = parse_value(line, key, v)?,
            "seed" => self.seed = parse_value(line, key, v)?,
            "normalization" => self.normalization = parse_value(line, key, v)?,
            "hidden_activation" => self.hidden_activation = parse_value(line, key, v)?,
            _ => unreachable!("key checked against KEYS"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let out = |key, message: String| Err(ConfigError::OutOfDomain { key, message });
        if let Err(e) = self.augment_params().validate() {
            return out("augmentation", e.to_string());
        }
        if !(0.0..=1.0).contains(&self.augment_fraction) {
            return out("augment_fraction", "must be in [0, 1]".into());
        }
        for (key, v) in [
            ("iterations", self.iterations),
            ("batch_size", self.batch_size),
            ("log_every", self.log_every),
        ] {
            if v == 0 {
                return out(key, "must be at least 1".into());
            }
        }
        if !(self.learning_rate > 0.0) {
            return out("learning_rate", "must be positive".into());
        }
        if let Err(m) = self.adam_hyper().validate() {
            return out("adam", m);
        }
        Ok(())
    }

    /// Re-emits every key; parsing the output yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "crop_fraction = {}", self.crop_fraction);
        let _ = writeln!(s, "scale_min = {}", self.scale_min);
        let _ = writeln!(s, "scale_max = {}", self.scale_max);
        let _ = writeln!(s, "brightness_factor = {}", self.brightness_factor);
        let _ = writeln!(s, "augment_fraction = {}", self.augment_fraction);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "log_every = {}", self.log_every);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "beta1 = {}", self.beta1);
        let _ = writeln!(s, "beta2 = {}", self.beta2);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "normalization = {}", self.normalization.name());
        let _ = writeln!(s, "hidden_activation = {}", self.hidden_activation.name());
        s
    }

    pub fn augment_params(&self) -> AugmentParams {
        AugmentParams {
            crop_fraction: self.crop_fraction,
            scale_min: self.scale_min,
            scale_max: self.scale_max,
            brightness_factor: self.brightness_factor as f32,
        }
    }

    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn train_config(&self, task: Task) -> TrainConfig {
        TrainConfig {
            task,
            iterations: self.iterations,
            batch_size: self.batch_size,
            hyper: self.adam_hyper(),
            seed: self.seed,
            log_every: self.log_every,
            activation: self.hidden_activation,
        }
    }
}

/// Seed precedence: explicit flag, then the `LESION_SEED` value, then the
/// config file (which itself defaults to 42).
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config_seed: u64) -> Result<u64, ConfigError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| ConfigError::BadValue {
            line: 0,
            key: SEED_ENV.to_string(),
            value: v.to_string(),
        }),
        None => Ok(config_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(PipelineConfig::parse("# nothing\n\n").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.iterations = 123;
        cfg.learning_rate = 3.5e-4;
        cfg.normalization = Normalization::UnitInterval;
        cfg.hidden_activation = Activation::Tanh;
        cfg.seed = u64::MAX;
        assert_eq!(PipelineConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(cfg.to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        assert!(matches!(
            PipelineConfig::parse("iteratons = 5"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("seed = 1\nbatch_size = -3"),
            Err(ConfigError::BadValue { line: 2, .. })
        ));
        assert!(matches!(PipelineConfig::parse("seed"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(
            PipelineConfig::parse("beta1 = 1.0"),
            Err(ConfigError::OutOfDomain { .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("seed = 1\nseed = 2"),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
        assert!(PipelineConfig::parse("augment_fraction = 1.2").is_err());
        assert!(PipelineConfig::parse("scale_min = 1.3").is_err());
    }

    #[test]
    fn inline_comments() {
        let cfg = PipelineConfig::parse("iterations = 7 # short run\n").unwrap();
        assert_eq!(cfg.iterations, 7);
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2"), 3).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some("2"), 3).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, 3).unwrap(), 3);
        assert!(resolve_seed(None, Some("x"), 3).is_err());
    }
}
