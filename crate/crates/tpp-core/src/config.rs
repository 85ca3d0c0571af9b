//! Run configuration: every tunable in one struct, with defaults pinned to
//! the reference hyperparameters (smoothing steps 3, prompt tokens 3,
//! learning rates 0.005 task / 0.001 contrastive, 200 epochs each,
//! temperature 0.5, edge removal 0.2, attribute masking 0.3). The hidden
//! width defaults to the desk-scale 64; the full-scale setting is 256.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TppError};
use crate::graph::check_probability;
use crate::harness::OrderingMode;
use crate::nn::TrainConfig;
use crate::synth::SbmSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Laplacian smoothing steps for prototype construction.
    pub smoothing_steps: usize,
    /// Tokens per graph prompt.
    pub token_count: usize,
    /// Backbone hidden width (64 desk-scale, 256 full-scale).
    pub hidden_dim: usize,
    /// Propagation applications per backbone stage.
    pub steps_per_layer: usize,
    pub task_learning_rate: f64,
    pub contrastive_learning_rate: f64,
    pub task_epochs: usize,
    pub contrastive_epochs: usize,
    pub temperature: f64,
    pub edge_removal_prob: f64,
    pub attr_mask_prob: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub prompt_init_sigma: f64,
    pub ordering: OrderingMode,
    /// Ablation switches; all on reproduces the full method.
    pub prompt_on: bool,
    pub head_on: bool,
    pub task_id_on: bool,
    /// Give the joint baseline true task ids at test time (upper bound).
    pub oracle_task_ids: bool,
    /// Per-class balanced accuracy instead of plain accuracy.
    pub balanced_accuracy: bool,
    /// Draw a fresh contrastive view each epoch instead of fixing one.
    pub fresh_augmentation: bool,
    pub seed: u64,
    pub sbm: SbmSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            smoothing_steps: 3,
            token_count: 3,
            hidden_dim: 64,
            steps_per_layer: 1,
            task_learning_rate: 0.005,
            contrastive_learning_rate: 0.001,
            task_epochs: 200,
            contrastive_epochs: 200,
            temperature: 0.5,
            edge_removal_prob: 0.2,
            attr_mask_prob: 0.3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            prompt_init_sigma: 0.01,
            ordering: OrderingMode::Ascending,
            prompt_on: true,
            head_on: true,
            task_id_on: true,
            oracle_task_ids: false,
            balanced_accuracy: false,
            fresh_augmentation: true,
            seed: 1,
            sbm: SbmSpec::default(),
        }
    }
}

impl RunConfig {
    /// Read a TOML config file; file values override the defaults, unknown
    /// keys are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| TppError::MalformedFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_learning_rate <= 0.0 || self.contrastive_learning_rate <= 0.0 {
            return Err(TppError::InvalidConfig(
                "learning rates must be positive".into(),
            ));
        }
        if self.temperature <= 0.0 {
            return Err(TppError::InvalidConfig("temperature must be positive".into()));
        }
        if self.token_count == 0 || self.hidden_dim == 0 {
            return Err(TppError::InvalidConfig(
                "token_count and hidden_dim must be positive".into(),
            ));
        }
        check_probability("edge_removal_prob", self.edge_removal_prob)?;
        check_probability("attr_mask_prob", self.attr_mask_prob)?;
        self.sbm.validate()?;
        Ok(())
    }

    /// Override the run seed and the synthetic-stream seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sbm.seed = seed;
        self
    }

    pub fn contrastive_train_config(&self, rng_seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.contrastive_learning_rate,
            epochs: self.contrastive_epochs,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            temperature: self.temperature,
            rng_seed,
            fresh_augmentation: self.fresh_augmentation,
        }
    }

    pub fn task_train_config(&self, rng_seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.task_learning_rate,
            epochs: self.task_epochs,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            temperature: self.temperature,
            rng_seed,
            fresh_augmentation: self.fresh_augmentation,
        }
    }
}
