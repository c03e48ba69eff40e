use rand_chacha::ChaCha8Rng;

use super::init_uniform;
use crate::autodiff::{Graph, Param, Parameterized, Tensor, Var};
use crate::error::{Error, Result};

/// Weight-normalised causal dilated 1-D convolution.
///
/// The effective kernel for output channel `c` is `gain[c] · v[c] / ‖v[c]‖`,
/// the norm taken over all `in_ch · kernel` entries. Inputs are left-padded
/// with `(kernel − 1) · dilation` zeros so output `t` only sees inputs `≤ t`;
/// tap `kernel − 1` aligns with the current step.
#[derive(Clone, Debug)]
pub struct CausalConv1d {
    pub direction: Param,
    pub gain: Param,
    pub bias: Param,
    dilation: usize,
}

impl CausalConv1d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel >= 1 && dilation >= 1, "kernel and dilation must be >= 1");
        let v = init_uniform(rng, &[out_ch, in_ch, kernel], in_ch * kernel);
        let norms = row_norms(&v);
        CausalConv1d {
            direction: Param::new(v),
            gain: Param::new(Tensor::vector(norms)),
            bias: Param::new(Tensor::zeros(&[out_ch])),
            dilation,
        }
    }

    /// Builds a layer whose effective kernel is exactly `weight`
    /// (gains set to the row norms). Rows must be nonzero.
    pub fn from_weight(weight: Tensor, bias: Tensor, dilation: usize) -> Result<Self> {
        if weight.rank() != 3 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("causal_conv1d", weight.shape(), bias.shape()));
        }
        let norms = row_norms(&weight);
        Ok(CausalConv1d {
            direction: Param::new(weight),
            gain: Param::new(Tensor::vector(norms)),
            bias: Param::new(bias),
            dilation,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.direction.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.direction.value.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.direction.value.shape()[2]
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// The reparameterised kernel `g · v / ‖v‖`.
    pub fn effective_weight(&self) -> Result<Tensor> {
        let mut g = Graph::new();
        let v = g.constant(self.direction.value.clone());
        let gain = g.constant(self.gain.value.clone());
        let w = g.weight_norm(v, gain)?;
        Ok(g.value(w).clone())
    }

    /// `x: [B, in_ch, T] → [B, out_ch, T]`
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 3 || s[1] != self.in_channels() {
            return Err(Error::shape("causal_conv1d", s, self.direction.value.shape()));
        }
        let v = g.param(&self.direction);
        let gain = g.param(&self.gain);
        let w = g.weight_norm(v, gain)?;
        let b = g.param(&self.bias);
        g.causal_conv1d(x, w, b, self.dilation)
    }
}

impl Parameterized for CausalConv1d {
    fn named_params(&self) -> Vec<(String, &Param)> {
        vec![
            ("direction".into(), &self.direction),
            ("gain".into(), &self.gain),
            ("bias".into(), &self.bias),
        ]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![
            ("direction".into(), &mut self.direction),
            ("gain".into(), &mut self.gain),
            ("bias".into(), &mut self.bias),
        ]
    }
}

fn row_norms(v: &Tensor) -> Vec<f64> {
    let rows = v.shape()[0];
    let width = v.numel() / rows;
    v.data()
        .chunks(width)
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect()
}

/// Plain 1×1 convolution (no weight norm), used to match channel counts on
/// a residual path.
#[derive(Clone, Debug)]
pub struct PointwiseConv {
    pub weight: Param,
    pub bias: Param,
}

impl PointwiseConv {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        PointwiseConv {
            weight: Param::new(init_uniform(rng, &[out_ch, in_ch, 1], in_ch)),
            bias: Param::new(Tensor::zeros(&[out_ch])),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.causal_conv1d(x, w, b, 1)
    }
}

impl Parameterized for PointwiseConv {
    fn named_params(&self) -> Vec<(String, &Param)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}
