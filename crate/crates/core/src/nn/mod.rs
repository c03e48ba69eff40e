//! Neural layers with exact parameter accounting.
//!
//! Every layer implements [`Parameterized`](crate::autodiff::Parameterized);
//! `param_count` counts trainable entries only (batch-norm running
//! statistics are buffers, not parameters).

mod batchnorm;
mod conv;
mod dense;
mod lstm;
mod mlp;
mod tcn;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};

pub use batchnorm::BatchNorm1d;
pub use conv::{CausalConv1d, PointwiseConv};
pub use dense::Dense;
pub use lstm::{Lstm, LstmLayer, LstmState};
pub use mlp::Mlp;
pub use tcn::{Tcn, TcnBlock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-pass state: train/eval mode and the dropout RNG.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub mode: Mode,
    rng: ChaCha8Rng,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Ctx {
            mode: Mode::Train,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn eval() -> Self {
        Ctx {
            mode: Mode::Eval,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }
}

/// Inverted dropout; a no-op in eval mode or at rate 0.
pub fn dropout(g: &mut Graph, x: Var, rate: f64, ctx: &mut Ctx) -> Var {
    if !ctx.is_train() || rate <= 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mask: Vec<f64> = (0..n)
        .map(|_| if ctx.rng.random_bool(keep) { 1.0 / keep } else { 0.0 })
        .collect();
    let m = g.constant(Tensor::new(shape, mask).expect("shape"));
    g.mul(x, m).expect("same shape")
}

/// Uniform initialisation on ±√(1/fan_in).
pub(crate) fn init_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}
