use rand_chacha::ChaCha8Rng;

use super::init_uniform;
use crate::autodiff::{Graph, Param, Parameterized, Tensor, Var};
use crate::error::{Error, Result};

/// Fully connected layer `y = x·Wᵀ + b` with `W: [out, in]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            weight: Param::new(init_uniform(rng, &[out_features, in_features], in_features)),
            bias: Param::new(Tensor::zeros(&[out_features])),
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("dense", weight.shape(), bias.shape()));
        }
        Ok(Dense {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    /// `x: [B, in] → [B, out]`
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 2 || s[1] != self.in_features() {
            return Err(Error::shape("dense", s, self.weight.value.shape()));
        }
        let w = g.param(&self.weight);
        let wt = g.transpose(w, 0, 1)?;
        let y = g.matmul(x, wt)?;
        let b = g.param(&self.bias);
        g.add_bias(y, b)
    }
}

impl Parameterized for Dense {
    fn named_params(&self) -> Vec<(String, &Param)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}
