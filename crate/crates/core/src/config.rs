//! Experiment configuration: a sectioned key=value file (TOML) with every
//! hyper-parameter of the pipeline. All defaults are materialized when the
//! resolved config is written into a run directory, so nothing stays implicit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::SyntheticSpec;
use crate::error::{ColtError, Result};

/// Training-set composition strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Plain contrastive training on the ID set.
    Baseline,
    /// Tailness-driven clustered OOD sampling plus the distribution loss.
    Colt,
    /// Same budget and schedule, but uniform pool draws instead of
    /// similarity-ranked selection.
    RandomSample,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Baseline => write!(f, "baseline"),
            Mode::Colt => write!(f, "colt"),
            Mode::RandomSample => write!(f, "random-sample"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic generator parameters; ignored when file paths are given.
    pub num_classes: usize,
    pub max_class_size: usize,
    pub imbalance_ratio: f64,
    pub dim: usize,
    pub id_center_scale: f64,
    pub ood_center_shift: f64,
    pub noise_sigma: f64,
    pub ood_pool_size: usize,
    /// Balanced evaluation set size per class.
    pub test_per_class: usize,
    /// View augmentation strength.
    pub aug_strength: f64,
    /// Optional external embedding files replacing the synthetic generator.
    pub id_train_path: Option<String>,
    pub id_test_path: Option<String>,
    pub ood_pool_path: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            max_class_size: 800,
            imbalance_ratio: 100.0,
            dim: 16,
            id_center_scale: 1.0,
            ood_center_shift: 0.75,
            noise_sigma: 0.55,
            ood_pool_size: 20_000,
            test_per_class: 100,
            aug_strength: 1.0,
            id_train_path: None,
            id_test_path: None,
            ood_pool_path: None,
        }
    }
}

impl DataConfig {
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: self.num_classes,
            max_class_size: self.max_class_size,
            imbalance_ratio: self.imbalance_ratio,
            dim: self.dim,
            id_center_scale: self.id_center_scale,
            ood_center_shift: self.ood_center_shift,
            noise_sigma: self.noise_sigma,
        }
    }

    pub fn uses_files(&self) -> bool {
        self.id_train_path.is_some()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            embed_dim: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Linear learning-rate warm-up over this many epochs (0 = constant).
    pub lr_warmup_epochs: usize,
    /// Contrastive temperature, shared by both losses.
    pub tau: f64,
    /// Weight of the distribution-level supervised loss.
    pub alpha: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            lr: 1.0,
            weight_decay: 1e-5,
            lr_warmup_epochs: 0,
            tau: 0.5,
            alpha: 0.2,
            mode: Mode::Colt,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailnessConfig {
    /// Top-k% of negative logits summed into the score.
    pub k_percent: f64,
    /// Momentum of the epoch-to-epoch score update.
    pub momentum: f64,
}

impl Default for TailnessConfig {
    fn default() -> Self {
        Self {
            k_percent: 2.0,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total OOD budget per round.
    pub budget_k: usize,
    pub clusters: usize,
    /// Budget softmax temperature.
    pub tau_c: f64,
    pub resample_interval: usize,
    /// Warm-up epochs before sampling starts; default is 10% of the epochs.
    pub warmup_epochs: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            budget_k: 2_000,
            clusters: 10,
            tau_c: 1.0,
            resample_interval: 25,
            warmup_epochs: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Probe training fractions (1.0 = linear probing, 0.01 = few-shot).
    pub fractions: Vec<f64>,
    pub probe_iters: usize,
    pub probe_l2: f64,
    pub probe_lr: f64,
    /// Interval between in-training evaluations.
    pub eval_every: usize,
    pub connectivity_samples_per_class: usize,
    pub connectivity_views: usize,
    pub connectivity_percentile: f64,
    /// Top-score percentage for the tail-discovery ratio.
    pub gamma_percent: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fractions: vec![1.0, 0.01],
            probe_iters: 500,
            probe_l2: 1e-4,
            probe_lr: 2.0,
            eval_every: 25,
            connectivity_samples_per_class: 20,
            connectivity_views: 8,
            connectivity_percentile: 10.0,
            gamma_percent: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub tailness: TailnessConfig,
    pub sampler: SamplerConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| ColtError::Parameter(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| ColtError::Parameter(format!("config serialize error: {e}")))?;
        std::fs::write(path.as_ref(), text)?;
        Ok(())
    }

    /// Warm-up epochs with the 10%-of-epochs default applied.
    pub fn warmup_epochs(&self) -> usize {
        self.sampler
            .warmup_epochs
            .unwrap_or_else(|| (self.train.epochs / 10).max(1))
    }

    /// Copy with every derived default materialized.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.sampler.warmup_epochs = Some(self.warmup_epochs());
        out
    }

    /// Validates every module-level precondition checkable at load time.
    pub fn validate(&self) -> Result<()> {
        if !self.data.uses_files() {
            self.data.synthetic_spec().validate()?;
            if self.data.num_classes < 3 {
                return Err(ColtError::Parameter(
                    "group split needs at least 3 classes".to_string(),
                ));
            }
            if self.data.ood_pool_size == 0 {
                return Err(ColtError::Parameter(
                    "ood_pool_size must be positive".to_string(),
                ));
            }
            if self.data.test_per_class == 0 {
                return Err(ColtError::Parameter(
                    "test_per_class must be positive".to_string(),
                ));
            }
        } else if self.data.id_test_path.is_none() || self.data.ood_pool_path.is_none() {
            return Err(ColtError::Parameter(
                "file-backed runs need id_train_path, id_test_path and ood_pool_path".to_string(),
            ));
        }
        if self.data.aug_strength < 0.0 {
            return Err(ColtError::Parameter(
                "aug_strength must be >= 0".to_string(),
            ));
        }
        if self.encoder.embed_dim < 2 {
            return Err(ColtError::Parameter("embed_dim must be >= 2".to_string()));
        }
        if self.train.epochs == 0 {
            return Err(ColtError::Parameter("epochs must be >= 1".to_string()));
        }
        if self.train.batch_size == 0 {
            return Err(ColtError::Parameter("batch_size must be >= 1".to_string()));
        }
        if self.train.lr < 0.0 {
            return Err(ColtError::Parameter("lr must be >= 0".to_string()));
        }
        if !(self.train.tau > 0.0) {
            return Err(ColtError::Parameter("tau must be positive".to_string()));
        }
        if self.train.alpha < 0.0 {
            return Err(ColtError::Parameter("alpha must be >= 0".to_string()));
        }
        if !(self.tailness.k_percent > 0.0 && self.tailness.k_percent <= 100.0) {
            return Err(ColtError::Parameter(
                "k_percent must be in (0,100]".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.tailness.momentum) {
            return Err(ColtError::Parameter(
                "momentum must be in [0,1)".to_string(),
            ));
        }
        if !(self.sampler.tau_c > 0.0) {
            return Err(ColtError::Parameter("tau_c must be positive".to_string()));
        }
        if self.sampler.resample_interval == 0 {
            return Err(ColtError::Parameter(
                "resample_interval must be >= 1".to_string(),
            ));
        }
        if self.sampler.clusters == 0 {
            return Err(ColtError::Parameter("clusters must be >= 1".to_string()));
        }
        if self.warmup_epochs() == 0 {
            return Err(ColtError::Parameter(
                "warmup_epochs must be >= 1 so scores exist before sampling".to_string(),
            ));
        }
        if self.eval.fractions.is_empty() {
            return Err(ColtError::Parameter(
                "at least one probe fraction required".to_string(),
            ));
        }
        for &f in &self.eval.fractions {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ColtError::Parameter(format!(
                    "probe fraction {} outside (0,1]",
                    f
                )));
            }
        }
        if self.eval.eval_every == 0 {
            return Err(ColtError::Parameter("eval_every must be >= 1".to_string()));
        }
        if !(self.eval.gamma_percent > 0.0 && self.eval.gamma_percent <= 100.0) {
            return Err(ColtError::Parameter(
                "gamma_percent must be in (0,100]".to_string(),
            ));
        }
        if self.eval.connectivity_views < 2 {
            return Err(ColtError::Parameter(
                "connectivity_views must be >= 2".to_string(),
            ));
        }
        Ok(())
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
    fn roundtrip_preserves_values() {
        let mut config = ExperimentConfig::default();
        config.train.seed = 42;
        config.train.mode = Mode::RandomSample;
        config.sampler.warmup_epochs = Some(30);
        let text = toml::to_string_pretty(&config).unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back.train.seed, 42);
        assert_eq!(back.train.mode, Mode::RandomSample);
        assert_eq!(back.sampler.warmup_epochs, Some(30));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let config = ExperimentConfig::from_toml(
            "[train]\nepochs = 50\nmode = \"baseline\"\n\n[sampler]\nbudget_k = 100\n",
        )
        .unwrap();
        assert_eq!(config.train.epochs, 50);
        assert_eq!(config.train.mode, Mode::Baseline);
        assert_eq!(config.sampler.budget_k, 100);
        assert_eq!(config.data.num_classes, 10);
        assert_eq!(config.warmup_epochs(), 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("[train]\nnot_a_key = 1\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml("[train]\ntau = 0.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[tailness]\nmomentum = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[sampler]\nresample_interval = 0\n").is_err());
    }

    #[test]
    fn resolved_materializes_warmup() {
        let config = ExperimentConfig::default();
        assert!(config.sampler.warmup_epochs.is_none());
        assert_eq!(config.resolved().sampler.warmup_epochs, Some(20));
    }
}
