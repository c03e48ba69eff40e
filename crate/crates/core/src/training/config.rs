use serde::{Deserialize, Serialize};

use super::LossMode;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// Constant `lambda`.
    #[default]
    Fixed,
    /// `lambda · (2/(1 + exp(−10p)) − 1)` over training progress `p ∈ [0, 1]`.
    GaninSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Adversarial / direct / pretraining epochs.
    pub epochs: usize,
    /// Second-phase epochs of pretrain-then-finetune.
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub lambda_mode: LambdaMode,
    pub lambda: f64,
    pub loss_mode: LossMode,
    /// Add the target-train regression loss to the adversarial objective.
    pub target_supervision: bool,
    pub momentum: f64,
    pub seed: u64,
    pub convergence_window: usize,
    pub convergence_tol: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            epochs: 300,
            finetune_epochs: 300,
            batch_size: 16,
            lambda_mode: LambdaMode::Fixed,
            lambda: 1.0,
            loss_mode: LossMode::GaussianNll,
            target_supervision: true,
            momentum: 0.0,
            seed: 0,
            convergence_window: 20,
            convergence_tol: 1e-4,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::contract("learning_rate must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::contract("batch_size must be at least 2"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::contract("lambda must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::contract("momentum must lie in [0, 1)"));
        }
        Ok(())
    }

    /// λ at training progress `p ∈ [0, 1]`.
    pub fn lambda_at(&self, progress: f64) -> f64 {
        match self.lambda_mode {
            LambdaMode::Fixed => self.lambda,
            LambdaMode::GaninSchedule => self.lambda * (2.0 / (1.0 + (-10.0 * progress).exp()) - 1.0),
        }
    }
}
