use rand_chacha::ChaCha8Rng;

use super::SigmaLink;
use crate::autodiff::{prefixed, Graph, Param, Parameterized, Var};
use crate::error::{Error, Result};
use crate::nn::Dense;

pub const SIGMA_FLOOR: f64 = 1e-6;

/// Per-step `(μ, σ)`, each `[B, T]`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianPrediction {
    pub mu: Var,
    pub sigma: Var,
}

/// A `hidden → 2` dense map applied independently at every timestep.
#[derive(Clone, Debug)]
pub struct GaussianRegressor {
    pub dense: Dense,
    pub link: SigmaLink,
}

impl GaussianRegressor {
    pub fn new(hidden: usize, link: SigmaLink, rng: &mut ChaCha8Rng) -> Self {
        GaussianRegressor {
            dense: Dense::new(hidden, 2, rng),
            link,
        }
    }

    /// `features: [B, C, T] → (μ, σ)`
    pub fn forward(&self, g: &mut Graph, features: Var) -> Result<GaussianPrediction> {
        let s = g.shape(features).to_vec();
        if s.len() != 3 || s[1] != self.dense.in_features() {
            return Err(Error::shape("regress", &s, &[self.dense.in_features()]));
        }
        let (b, c, t) = (s[0], s[1], s[2]);
        let steps = g.transpose(features, 1, 2)?;
        let flat = g.reshape(steps, &[b * t, c])?;
        let raw = self.dense.forward(g, flat)?;
        let raw_mu = g.slice(raw, 1, 0, 1)?;
        let raw_mu = g.reshape(raw_mu, &[b, t])?;
        let raw_sigma = g.slice(raw, 1, 1, 1)?;
        let raw_sigma = g.reshape(raw_sigma, &[b, t])?;
        let (mu, sigma) = match self.link {
            SigmaLink::SoftplusEpsilon => (raw_mu, g.softplus(raw_sigma)),
            SigmaLink::PaperStrictRelu => (g.relu(raw_mu), g.relu(raw_sigma)),
        };
        let sigma = g.add_scalar(sigma, SIGMA_FLOOR);
        Ok(GaussianPrediction { mu, sigma })
    }
}

impl Parameterized for GaussianRegressor {
    fn named_params(&self) -> Vec<(String, &Param)> {
        prefixed("dense", self.dense.named_params())
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        prefixed("dense", self.dense.named_params_mut())
    }
}
