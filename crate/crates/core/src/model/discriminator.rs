use rand_chacha::ChaCha8Rng;

use crate::autodiff::{prefixed, Graph, Param, Parameterized, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm1d, Dense, Mode};

/// `GRL → flatten → Dense → BatchNorm → ReLU → Dense → sigmoid`.
#[derive(Clone, Debug)]
pub struct DomainDiscriminator {
    pub fc1: Dense,
    pub bn: BatchNorm1d,
    pub fc2: Dense,
    /// Disabling the reversal exists for gradient comparisons in tests.
    pub reverse_gradient: bool,
}

impl DomainDiscriminator {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        DomainDiscriminator {
            fc1: Dense::new(input, hidden, rng),
            bn: BatchNorm1d::new(hidden),
            fc2: Dense::new(hidden, 1, rng),
            reverse_gradient: true,
        }
    }

    /// `features: [B, C, T] → [B, 1]` probabilities of domain label 1.
    pub fn forward(&mut self, g: &mut Graph, features: Var, mode: Mode) -> Result<Var> {
        let s = g.shape(features).to_vec();
        let width: usize = s[1..].iter().product();
        if s.len() != 3 || width != self.fc1.in_features() {
            return Err(Error::shape("discriminate", &s, &[self.fc1.in_features()]));
        }
        let f = if self.reverse_gradient {
            g.grad_reverse(features)
        } else {
            features
        };
        let flat = g.reshape(f, &[s[0], width])?;
        let h = self.fc1.forward(g, flat)?;
        let h = self.bn.forward(g, h, mode)?;
        let h = g.relu(h);
        let logit = self.fc2.forward(g, h)?;
        Ok(g.sigmoid(logit))
    }
}

impl Parameterized for DomainDiscriminator {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = prefixed("fc1", self.fc1.named_params());
        out.extend(prefixed("bn", self.bn.named_params()));
        out.extend(prefixed("fc2", self.fc2.named_params()));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = prefixed("fc1", self.fc1.named_params_mut());
        out.extend(prefixed("bn", self.bn.named_params_mut()));
        out.extend(prefixed("fc2", self.fc2.named_params_mut()));
        out
    }
}
