use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Linear warmup, then cosine decay to zero.
    Cosine,
    /// Linear warmup, then constant.
    Constant,
}

/// What the model sees in the answer slots during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `UNKNOWN` in every slot; supervision at the readout positions only.
    Slots,
    /// Gold answers written into the slots, as an ordinary left-to-right
    /// generative judge would see its own previous answers. Produces a base
    /// model for comparison, never the judging model itself.
    TeacherForced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Weight of the reason loss.
    pub lambda: f64,
    pub with_cot: bool,
    pub seed: u64,
    pub drop_last_incomplete_batch: bool,
    /// Validation interval in optimizer steps; 0 disables intermediate validation.
    pub eval_every: usize,
    /// Validation samples used at intermediate evaluations; 0 means all.
    pub eval_subset: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Randomly permute the requirements of literal samples each time they are drawn.
    pub shuffle_requirements: bool,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            warmup_ratio: 0.05,
            schedule: Schedule::Cosine,
            epochs: 1,
            batch_size: 16,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lambda: 0.55,
            with_cot: false,
            seed: 0,
            drop_last_incomplete_batch: true,
            eval_every: 200,
            eval_subset: 512,
            grad_clip: Some(1.0),
            shuffle_requirements: true,
            objective: Objective::Slots,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Train(format!("invalid training configuration: {m}")));
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return err("warmup_ratio must lie in [0, 1)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return err("lambda must be a finite non-negative number");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return err("epochs and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0
        {
            return err("betas must lie in [0, 1) and eps must be positive");
        }
        if self.weight_decay < 0.0 {
            return err("weight_decay must be non-negative");
        }
        if self.grad_clip.is_some_and(|c| c <= 0.0) {
            return err("grad_clip must be positive");
        }
        Ok(())
    }
}
