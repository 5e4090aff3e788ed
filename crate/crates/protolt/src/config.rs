//! The experiment configuration document.
//!
//! One JSON file drives every command: data generation, both training
//! stages, fusion, and metric thresholds. Unknown keys are rejected so a
//! typo cannot silently fall back to a default and corrupt a paired
//! comparison. Every field has a documented default.

use std::path::Path;

use crate::classifier::FusionConfig;
use crate::error::{Error, Result};
use crate::metrics::SplitThresholds;
use crate::pipeline::{RecognizeConfig, TrainConfig};
use crate::synth::LongTailSpec;

/// Stage-2 linear-head optimizer settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for HeadSettings {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.5,
        }
    }
}

impl HeadSettings {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("head.batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "head.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Evaluation knobs: k for neighborhood uniformity and the split bounds.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSettings {
    pub uniformity_k: usize,
    pub many_min: usize,
    pub few_max: usize,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self {
            uniformity_k: 10,
            many_min: 100,
            few_max: 20,
        }
    }
}

impl MetricsSettings {
    pub fn thresholds(&self) -> SplitThresholds {
        SplitThresholds {
            many_min: self.many_min,
            few_max: self.few_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.uniformity_k == 0 {
            return Err(Error::Config("metrics.uniformity_k must be positive".into()));
        }
        self.thresholds().validate()
    }
}

/// The full experiment document. Defaults: τ = 0.07, λ = 0.5, m = 0.999,
/// α = 0.8, uniformity k = 10, many/few bounds 100/20.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: LongTailSpec,
    pub train: TrainConfig,
    pub head: HeadSettings,
    pub fusion: FusionConfig,
    pub metrics: MetricsSettings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.data
            .validate()
            .map_err(|e| Error::Config(format!("data: {e}")))?;
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        self.head.validate()?;
        self.fusion
            .validate()
            .map_err(|e| Error::Config(format!("fusion: {e}")))?;
        self.metrics.validate()
    }

    /// Parses and validates a config file, reporting the offending line and
    /// field on failure.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}: line {}, column {}: {}",
                path.display(),
                e.line(),
                e.column(),
                e
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Assembles the stage-2 configuration from the document.
    pub fn recognize_config(&self) -> RecognizeConfig {
        RecognizeConfig {
            head_epochs: self.head.epochs,
            head_batch_size: self.head.batch_size,
            head_learning_rate: self.head.learning_rate,
            fusion: self.fusion,
            thresholds: self.metrics.thresholds(),
            uniformity_k: self.metrics.uniformity_k,
            seed: self.train.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn default_values_match_documented_ones() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.train.loss.tau, 0.07);
        assert_eq!(cfg.train.loss.lambda, 0.5);
        assert_eq!(cfg.train.momentum, 0.999);
        assert_eq!(cfg.fusion.alpha, 0.8);
        assert_eq!(cfg.metrics.uniformity_k, 10);
        assert_eq!(cfg.metrics.many_min, 100);
        assert_eq!(cfg.metrics.few_max, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"train": {"lerning_rate": 0.1}}"#;
        let err = serde_json::from_str::<ExperimentConfig>(text).unwrap_err();
        assert!(err.to_string().contains("lerning_rate"));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let text = r#"{"data": {"classes": 6}, "fusion": {"alpha": 0.4}}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.data.classes, 6);
        assert_eq!(cfg.data.dim_raw, LongTailSpec::default().dim_raw);
        assert_eq!(cfg.fusion.alpha, 0.4);
        assert_eq!(cfg.train.epochs, TrainConfig::default().epochs);
    }

    #[test]
    fn json_round_trip_preserves_config() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
