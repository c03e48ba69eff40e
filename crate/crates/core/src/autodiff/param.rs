use std::sync::atomic::{AtomicU64, Ordering};

use super::graph::Graph;
use super::tensor::Tensor;

pub type ParamId = u64;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> ParamId {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// A trainable tensor living outside any graph.
///
/// Each forward pass binds the parameter into a fresh [`Graph`] as a leaf;
/// after `Graph::backward` the gradient is pulled back with
/// [`Param::accumulate_grad`]. Clones get a new identity so that two copies
/// can appear in one graph without aliasing.
#[derive(Debug)]
pub struct Param {
    id: ParamId,
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        Param {
            id: fresh_id(),
            value,
            grad: None,
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    /// Adds this parameter's leaf gradient from `graph` into `self.grad`.
    /// A parameter absent from the graph receives a zero gradient.
    pub fn accumulate_grad(&mut self, graph: &Graph) {
        let grad = self.grad.get_or_insert_with(|| Tensor::zeros(self.value.shape()));
        if let Some(g) = graph.param_grad(self.id) {
            grad.add_assign(g);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.data_mut().fill(0.0);
        }
    }
}

impl Clone for Param {
    fn clone(&self) -> Self {
        Param {
            id: fresh_id(),
            value: self.value.clone(),
            grad: self.grad.clone(),
        }
    }
}

/// Anything that owns named trainable parameters.
pub trait Parameterized {
    fn named_params(&self) -> Vec<(String, &Param)>;
    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)>;

    fn params(&self) -> Vec<&Param> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.named_params_mut().into_iter().map(|(_, p)| p).collect()
    }

    /// Total trainable entries.
    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    fn accumulate_grads(&mut self, graph: &Graph) {
        for p in self.params_mut() {
            p.accumulate_grad(graph);
        }
    }

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Prefixes every name in `params` with `prefix.`.
pub fn prefixed<P>(prefix: &str, params: Vec<(String, P)>) -> Vec<(String, P)> {
    params
        .into_iter()
        .map(|(name, p)| (format!("{prefix}.{name}"), p))
        .collect()
}

/// A bare list of parameters, named by position.
#[derive(Clone, Debug, Default)]
pub struct ParamList(pub Vec<Param>);

impl ParamList {
    pub fn from_tensors(tensors: &[Tensor]) -> Self {
        ParamList(tensors.iter().cloned().map(Param::new).collect())
    }
}

impl Parameterized for ParamList {
    fn named_params(&self) -> Vec<(String, &Param)> {
        self.0.iter().enumerate().map(|(i, p)| (i.to_string(), p)).collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        self.0.iter_mut().enumerate().map(|(i, p)| (i.to_string(), p)).collect()
    }
}
