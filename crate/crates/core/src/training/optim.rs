use std::collections::HashMap;

use crate::autodiff::{ParamId, Parameterized};
use crate::error::{Error, Result};

/// `θ ← θ − lr·∇θ` for every parameter, then zeroes the gradients.
pub fn sgd_step<M: Parameterized + ?Sized>(model: &mut M, lr: f64) -> Result<()> {
    Sgd::new(lr, 0.0)?.step(model)
}

/// Plain SGD, optionally with heavy-ball momentum.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: HashMap<ParamId, Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::contract(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::contract("momentum must lie in [0, 1)"));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: HashMap::new(),
        })
    }

    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M) -> Result<()> {
        let named = model.named_params_mut();
        if let Some((name, _)) = named.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(Error::contract(format!("parameter '{name}' has no gradient")));
        }
        for (_, p) in named {
            let id = p.id();
            let grad = p.grad.as_mut().expect("checked above");
            if self.momentum == 0.0 {
                for (w, gv) in p.value.data_mut().iter_mut().zip(grad.data()) {
                    *w -= self.lr * gv;
                }
            } else {
                let v = self.velocity.entry(id).or_insert_with(|| vec![0.0; grad.numel()]);
                for ((w, gv), vel) in p.value.data_mut().iter_mut().zip(grad.data()).zip(v) {
                    *vel = self.momentum * *vel + gv;
                    *w -= self.lr * *vel;
                }
            }
            grad.data_mut().fill(0.0);
        }
        Ok(())
    }
}
