//! Declarative experiment configuration read from TOML.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gan::GanConfig;
use crate::model::{LrSchedule, ModelConfig, TrainConfig};
use crate::optim::AdamConfig;
use crate::scene::{SceneConfig, DEFAULT_SPLIT_RATIOS};
use crate::similarity::SimilarityConfig;

/// Adam moments printed in the original parameter table.
pub const PUBLISHED_BETAS: (f64, f64) = (0.99, 0.9);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Number of instruction records to generate.
    pub corpus_size: usize,
    /// Train / valid / test fractions.
    pub split: [f64; 3],
    pub scene: SceneConfig,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            corpus_size: 2000,
            split: DEFAULT_SPLIT_RATIOS,
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Replaces `beta1`/`beta2` with [`PUBLISHED_BETAS`].
    pub published_betas: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    pub patience: Option<usize>,
    pub schedule: LrSchedule,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            published_betas: false,
            batch_size: 16,
            epochs: 30,
            weight_decay: 0.05,
            clip_norm: None,
            patience: None,
            schedule: LrSchedule::Cosine,
        }
    }
}

impl OptimizerSection {
    pub fn adam(&self) -> AdamConfig {
        let (beta1, beta2) = if self.published_betas {
            PUBLISHED_BETAS
        } else {
            (self.beta1, self.beta2)
        };
        AdamConfig {
            clip_norm: self.clip_norm,
            weight_decay: self.weight_decay,
            ..AdamConfig::new(self.lr, beta1, beta2)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam(),
            patience: self.patience,
            schedule: self.schedule,
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.lr > 0.0) {
            p.push("optimizer.lr must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            p.push("optimizer.beta1 and optimizer.beta2 must lie in [0, 1)".into());
        }
        if self.batch_size == 0 {
            p.push("optimizer.batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            p.push("optimizer.epochs must be >= 1".into());
        }
        if !(self.weight_decay >= 0.0) {
            p.push("optimizer.weight_decay must be >= 0".into());
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            p.push("optimizer.clip_norm must be > 0".into());
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Incorrect pairs per correct pair in each region-wise evaluation.
    pub gammas: Vec<usize>,
    /// Negative resamplings per γ.
    pub trials: usize,
    /// Independent training seeds per reported method.
    pub seeds: usize,
    /// γ values of the relative-position (wrs) table.
    pub wrs_gammas: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            gammas: vec![1, 2, 5, 10],
            trials: 3,
            seeds: 5,
            wrs_gammas: vec![1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every derived random stream.
    pub seed: u64,
    pub dataset: DatasetSection,
    pub model: ModelConfig,
    pub optimizer: OptimizerSection,
    pub similarity: SimilarityConfig,
    pub gan: GanConfig,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSection::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerSection::default(),
            similarity: SimilarityConfig::default(),
            gan: GanConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Keys whose documented defaults are worth recording when left out.
const RECORDED_DEFAULTS: &[(&str, &str)] = &[("model", "lambda1"), ("model", "lambda2"), ("gan", "lambda")];

impl ExperimentConfig {
    /// Parses TOML and lists the recorded defaults that were filled in, as
    /// `section.key = value`.
    pub fn from_toml_str(text: &str) -> Result<(Self, Vec<String>)> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let config: Self = table.clone().try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut filled = Vec::new();
        for &(section, key) in RECORDED_DEFAULTS {
            let present = table
                .get(section)
                .and_then(|s| s.as_table())
                .is_some_and(|s| s.contains_key(key));
            if !present {
                let value = match (section, key) {
                    ("model", "lambda1") => config.model.lambda1,
                    ("model", "lambda2") => config.model.lambda2,
                    _ => config.gan.lambda,
                };
                filled.push(format!("{section}.{key} = {value}"));
            }
        }
        Ok((config, filled))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Smallest configuration that exercises every stage.
    pub fn minimal() -> Self {
        let mut c = Self::default();
        c.dataset.corpus_size = 10;
        c.dataset.split = [0.6, 0.2, 0.2];
        c.dataset.scene.instructions_per_scene = Some(1);
        c.optimizer.epochs = 2;
        c.gan.epochs = 2;
        c.eval.gammas = vec![1, 2];
        c.eval.trials = 1;
        c.eval.seeds = 1;
        c
    }

    /// Every problem across all sections.
    pub fn problems(&self) -> Vec<String> {
        let mut p = self.dataset.scene.problems();
        if self.dataset.corpus_size < 3 {
            p.push("dataset.corpus_size must be >= 3".into());
        }
        let s = self.dataset.split;
        if s.iter().any(|r| !(*r > 0.0)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            p.push(format!("dataset.split {s:?} must be positive and sum to 1"));
        }
        p.extend(self.model.problems());
        p.extend(self.optimizer.problems());
        if !(self.similarity.margin >= 0.0) || !(self.similarity.source_weight >= 0.0) {
            p.push("similarity.margin and similarity.source_weight must be >= 0".into());
        }
        p.extend(self.gan.problems());
        if self.eval.gammas.is_empty() {
            p.push("eval.gammas is empty".into());
        }
        if self.eval.trials == 0 {
            p.push("eval.trials must be >= 1".into());
        }
        if self.eval.seeds == 0 {
            p.push("eval.seeds must be >= 1".into());
        }
        if self.eval.wrs_gammas.is_empty() {
            p.push("eval.wrs_gammas is empty".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
