use crate::autodiff::{Graph, Param, Parameterized, Tensor, Var};
use crate::error::{Error, Result};

use super::Mode;

/// Batch normalisation over the batch axis of `[B, F]` inputs.
///
/// Train mode normalises with the batch's biased moments and updates the
/// running estimates (`running ← (1 − momentum)·running + momentum·batch`,
/// unbiased variance); eval mode uses the running estimates only.
#[derive(Clone, Debug)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm1d {
    pub fn new(features: usize) -> Self {
        BatchNorm1d {
            gamma: Param::new(Tensor::full(&[features], 1.0)),
            beta: Param::new(Tensor::zeros(&[features])),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&mut self, g: &mut Graph, x: Var, mode: Mode) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 2 || s[1] != self.features() {
            return Err(Error::shape("batch_norm", &s, &[self.features()]));
        }
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        match mode {
            Mode::Eval => g.batch_norm(x, gamma, beta, self.eps, Some((&self.running_mean, &self.running_var))),
            Mode::Train => {
                let b = s[0];
                if b < 2 {
                    return Err(Error::contract(format!(
                        "batch norm in train mode needs a batch of at least 2, got {b}"
                    )));
                }
                let (mean, var) = crate::autodiff::batch_moments(g.value(x).data(), b, s[1]);
                let y = g.batch_norm(x, gamma, beta, self.eps, None)?;
                let unbias = b as f64 / (b - 1) as f64;
                let m = self.momentum;
                for j in 0..self.features() {
                    self.running_mean[j] = (1.0 - m) * self.running_mean[j] + m * mean[j];
                    self.running_var[j] = (1.0 - m) * self.running_var[j] + m * var[j] * unbias;
                }
                Ok(y)
            }
        }
    }

    /// Eval-mode forward without touching running statistics.
    pub fn forward_eval(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        g.batch_norm(x, gamma, beta, self.eps, Some((&self.running_mean, &self.running_var)))
    }
}

impl Parameterized for BatchNorm1d {
    fn named_params(&self) -> Vec<(String, &Param)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }
}
