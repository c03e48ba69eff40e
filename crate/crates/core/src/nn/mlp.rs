use rand_chacha::ChaCha8Rng;

use super::Dense;
use crate::autodiff::{prefixed, Graph, Param, Parameterized, Var};
use crate::error::{Error, Result};

/// Stack of dense layers with ReLU between consecutive layers, and after the
/// last one when `relu_output` is set.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_output: bool,
}

impl Mlp {
    /// Three layers `input → hidden → hidden → output`.
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::with_sizes(&[input, hidden, hidden, output], false, rng)
    }

    pub fn with_sizes(sizes: &[usize], relu_output: bool, rng: &mut ChaCha8Rng) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        Mlp { layers, relu_output }
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, Dense::out_features)
    }

    /// `x: [N, in] → [N, out]`
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        if self.layers.is_empty() {
            return Err(Error::contract("MLP with no layers"));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(g, h)?;
            if i < last || self.relu_output {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

impl Parameterized for Mlp {
    fn named_params(&self) -> Vec<(String, &Param)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layers.{i}"), l.named_params()))
            .collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layers.{i}"), l.named_params_mut()))
            .collect()
    }
}
