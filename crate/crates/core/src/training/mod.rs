//! Losses, the adversarial objective, SGD, the training loops and
//! convergence detection.

mod config;
mod convergence;
mod eval;
mod loss;
mod metrics;
mod objective;
mod optim;
mod trainer;

pub use config::{LambdaMode, TrainingConfig};
pub use convergence::detect_convergence;
pub use eval::{evaluate, predict_dataset, EvalReport};
pub use loss::{
    assemble_objective, bce_loss, bce_terms, gaussian_nll, gaussian_nll_terms, gaussian_paper_loss,
    gaussian_paper_terms, regression_loss, regression_terms, LossMode, HALF_LN_2PI,
};
pub use metrics::{MetricsLog, MetricsRecord, Phase, CURVE_HEADER};
pub use objective::{check_dann_gradients, dann_losses, gradcheck_config, DannBatch, DannLosses, GRADCHECK_BATCH};
pub use optim::{sgd_step, Sgd};
pub use trainer::{pretrain_finetune, train_dann, train_direct, train_regression};

#[cfg(test)]
mod tests;
