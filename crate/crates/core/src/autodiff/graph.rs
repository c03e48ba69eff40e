//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in creation order, so the node index is already a
//! topological order and `backward` walks it in reverse. Leaf gradients
//! persist across `backward` calls and accumulate until `zero_grad`.

use std::collections::HashMap;
use std::sync::Arc;

use super::kernels::{self, ConvDims};
use super::param::{Param, ParamId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// User-defined differentiable operation.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    /// One gradient per input, each shaped like that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, upstream: &Tensor) -> Vec<Tensor>;
}

enum Op {
    Constant,
    Variable,
    Param,
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    AddScalar,
    MatMul,
    AddBias,
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Square,
    Softplus,
    Clamp(f64, f64),
    Sum,
    Mean,
    Concat(usize),
    Slice {
        axis: usize,
        start: usize,
    },
    Reshape,
    Transpose(usize, usize),
    PadLeft(usize),
    GradReverse,
    WeightNorm {
        norms: Vec<f64>,
    },
    CausalConv(ConvDims),
    BatchNorm {
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Custom(Arc<dyn CustomOp>),
}

impl Op {
    fn name(&self) -> &str {
        match self {
            Op::Constant => "constant",
            Op::Variable => "variable",
            Op::Param => "param",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Scale(_) => "scale",
            Op::AddScalar => "add_scalar",
            Op::MatMul => "matmul",
            Op::AddBias => "add_bias",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Tanh => "tanh",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Square => "square",
            Op::Softplus => "softplus",
            Op::Clamp(..) => "clamp",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape => "reshape",
            Op::Transpose(..) => "transpose",
            Op::PadLeft(_) => "pad_left",
            Op::GradReverse => "grad_reverse",
            Op::WeightNorm { .. } => "weight_norm",
            Op::CausalConv(_) => "causal_conv1d",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Custom(c) => c.name(),
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Constant | Op::Variable | Op::Param)
    }
}

struct Node {
    value: Tensor,
    op: Op,
    parents: Vec<Var>,
    needs_grad: bool,
}

/// A computation graph. One graph is built and differentiated by a single
/// thread; separate graphs are independent.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: HashMap<usize, Tensor>,
    params: HashMap<ParamId, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: Vec<Var>) -> Var {
        let needs_grad = match op {
            Op::Constant => false,
            Op::Variable | Op::Param => true,
            _ => parents.iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            parents,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, Vec::new())
    }

    /// Trainable leaf owned by the graph.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Variable, Vec::new())
    }

    /// Binds a parameter as a leaf. Binding the same parameter twice returns
    /// the same node, so shared weights accumulate one gradient.
    pub fn param(&mut self, p: &Param) -> Var {
        if let Some(&v) = self.params.get(&p.id()) {
            return v;
        }
        let v = self.push(p.value.clone(), Op::Param, Vec::new());
        self.params.insert(p.id(), v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn op_name(&self, v: Var) -> &str {
        self.nodes[v.0].op.name()
    }

    pub fn parents(&self, v: Var) -> &[Var] {
        &self.nodes[v.0].parents
    }

    /// Nodes that take `v` as a direct input, in creation order.
    pub fn consumers(&self, v: Var) -> Vec<Var> {
        (v.0 + 1..self.nodes.len())
            .filter(|&i| self.nodes[i].parents.contains(&v))
            .map(Var)
            .collect()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(&v.0)
    }

    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    pub fn param_grad(&self, id: ParamId) -> Option<&Tensor> {
        self.param_var(id).and_then(|v| self.grad(v))
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.clear();
    }

    pub fn backward(&mut self, root: Var) -> Result<()> {
        self.backward_impl(root, None)
    }

    /// Like [`Graph::backward`], also returning the order in which non-leaf
    /// nodes had their gradient rules applied.
    pub fn backward_traced(&mut self, root: Var) -> Result<Vec<Var>> {
        let mut trace = Vec::new();
        self.backward_impl(root, Some(&mut trace))?;
        Ok(trace)
    }

    fn backward_impl(&mut self, root: Var, mut trace: Option<&mut Vec<Var>>) -> Result<()> {
        let root_shape = self.shape(root);
        if root_shape.iter().product::<usize>() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar root, got shape {root_shape:?}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Tensor::full(root_shape, 1.0));

        for idx in (0..=root.0).rev() {
            let Some(up) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if node.op.is_leaf() {
                match self.leaf_grads.get_mut(&idx) {
                    Some(acc) => acc.add_assign(&up),
                    None => {
                        self.leaf_grads.insert(idx, up);
                    }
                }
                continue;
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(Var(idx));
            }
            let needs: Vec<bool> = node.parents.iter().map(|p| self.nodes[p.0].needs_grad).collect();
            let parent_grads = self.backward_rule(idx, &up, &needs);
            for ((p, g), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                if !need {
                    continue;
                }
                debug_assert_eq!(g.shape(), self.shape(*p), "{}", node.op.name());
                match grads[p.0].as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => grads[p.0] = Some(g),
                }
            }
        }
        Ok(())
    }

    fn pv(&self, idx: usize, i: usize) -> &Tensor {
        &self.nodes[self.nodes[idx].parents[i].0].value
    }

    /// Gradients for each parent of node `idx` given upstream `up`.
    /// Parents with `needs[i] == false` may receive a placeholder.
    fn backward_rule(&self, idx: usize, up: &Tensor, needs: &[bool]) -> Vec<Tensor> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let zip_map = |a: &Tensor, f: &dyn Fn(f64, f64) -> f64| -> Tensor {
            let data = a.data().iter().zip(up.data()).map(|(&x, &g)| f(x, g)).collect();
            Tensor::new(a.shape().to_vec(), data).expect("same shape")
        };
        match &node.op {
            Op::Constant | Op::Variable | Op::Param => Vec::new(),
            Op::Add => vec![up.clone(), up.clone()],
            Op::Sub => vec![up.clone(), up.map(|g| -g)],
            Op::Mul => {
                let (a, b) = (self.pv(idx, 0), self.pv(idx, 1));
                vec![zip_map(b, &|y, g| y * g), zip_map(a, &|x, g| x * g)]
            }
            Op::Div => {
                let (a, b) = (self.pv(idx, 0), self.pv(idx, 1));
                let da = zip_map(b, &|y, g| g / y);
                let db_data = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .zip(up.data())
                    .map(|((&x, &y), &g)| -g * x / (y * y))
                    .collect();
                vec![da, Tensor::new(b.shape().to_vec(), db_data).expect("shape")]
            }
            Op::Scale(s) => vec![up.map(|g| g * s)],
            Op::AddScalar => vec![up.clone()],
            Op::MatMul => {
                let (a, b) = (self.pv(idx, 0), self.pv(idx, 1));
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                if needs[0] {
                    kernels::matmul_nt_acc(up.data(), b.data(), &mut da, m, n, k);
                }
                if needs[1] {
                    kernels::matmul_tn_acc(a.data(), up.data(), &mut db, m, k, n);
                }
                vec![
                    Tensor::new(vec![m, k], da).expect("shape"),
                    Tensor::new(vec![k, n], db).expect("shape"),
                ]
            }
            Op::AddBias => {
                let n = self.pv(idx, 1).numel();
                let mut db = vec![0.0; n];
                for row in up.data().chunks(n) {
                    for (d, g) in db.iter_mut().zip(row) {
                        *d += g;
                    }
                }
                vec![up.clone(), Tensor::vector(db)]
            }
            Op::Relu => vec![zip_map(self.pv(idx, 0), &|x, g| if x > 0.0 { g } else { 0.0 })],
            Op::Sigmoid => vec![zip_map(out, &|y, g| g * y * (1.0 - y))],
            Op::Tanh => vec![zip_map(out, &|y, g| g * (1.0 - y * y))],
            Op::Exp => vec![zip_map(out, &|y, g| g * y)],
            Op::Log => vec![zip_map(self.pv(idx, 0), &|x, g| g / x)],
            Op::Square => vec![zip_map(self.pv(idx, 0), &|x, g| 2.0 * x * g)],
            Op::Softplus => vec![zip_map(self.pv(idx, 0), &|x, g| g * sigmoid(x))],
            Op::Clamp(lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                vec![zip_map(self.pv(idx, 0), &|x, g| {
                    if x >= lo && x <= hi {
                        g
                    } else {
                        0.0
                    }
                })]
            }
            Op::Sum => {
                let x = self.pv(idx, 0);
                vec![Tensor::full(x.shape(), up.data()[0])]
            }
            Op::Mean => {
                let x = self.pv(idx, 0);
                vec![Tensor::full(x.shape(), up.data()[0] / x.numel() as f64)]
            }
            Op::Concat(axis) => {
                let (outer, total, inner) = Tensor::axis_extents(out.shape(), *axis);
                let mut offset = 0;
                let mut res = Vec::with_capacity(node.parents.len());
                for (i, _) in node.parents.iter().enumerate() {
                    let p = self.pv(idx, i);
                    let dim = p.shape()[*axis];
                    let mut data = Vec::with_capacity(p.numel());
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        data.extend_from_slice(&up.data()[start..start + dim * inner]);
                    }
                    offset += dim;
                    res.push(Tensor::new(p.shape().to_vec(), data).expect("shape"));
                }
                res
            }
            Op::Slice { axis, start } => {
                let x = self.pv(idx, 0);
                let (outer, dim, inner) = Tensor::axis_extents(x.shape(), *axis);
                let len = out.shape()[*axis];
                let mut dx = vec![0.0; x.numel()];
                for o in 0..outer {
                    let dst = (o * dim + start) * inner;
                    let src = o * len * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&up.data()[src..src + len * inner]);
                }
                vec![Tensor::new(x.shape().to_vec(), dx).expect("shape")]
            }
            Op::Reshape => {
                let x = self.pv(idx, 0);
                vec![up.clone().reshaped(x.shape()).expect("shape")]
            }
            Op::Transpose(a, b) => {
                let (shape, data) = kernels::transpose(up.shape(), up.data(), *a, *b);
                vec![Tensor::new(shape, data).expect("shape")]
            }
            Op::PadLeft(n) => {
                let x = self.pv(idx, 0);
                let t = *x.shape().last().expect("rank");
                let data = up
                    .data()
                    .chunks(t + n)
                    .flat_map(|row| row[*n..].iter().copied())
                    .collect();
                vec![Tensor::new(x.shape().to_vec(), data).expect("shape")]
            }
            Op::GradReverse => vec![up.map(|g| -g)],
            Op::WeightNorm { norms } => {
                let (v, gain) = (self.pv(idx, 0), self.pv(idx, 1));
                let rows = gain.numel();
                let width = v.numel() / rows;
                let mut dv = vec![0.0; v.numel()];
                let mut dg = vec![0.0; rows];
                for r in 0..rows {
                    let vr = &v.data()[r * width..(r + 1) * width];
                    let ur = &up.data()[r * width..(r + 1) * width];
                    let n = norms[r];
                    // dot(up, v/‖v‖)
                    let proj = vr.iter().zip(ur).map(|(a, b)| a * b).sum::<f64>() / n;
                    dg[r] = proj;
                    let scale = gain.data()[r] / n;
                    for ((d, &u), &vv) in dv[r * width..(r + 1) * width].iter_mut().zip(ur).zip(vr) {
                        *d = scale * (u - proj * vv / n);
                    }
                }
                vec![Tensor::new(v.shape().to_vec(), dv).expect("shape"), Tensor::vector(dg)]
            }
            Op::CausalConv(dims) => {
                let (x, w) = (self.pv(idx, 0), self.pv(idx, 1));
                let (dx, dw, db) = kernels::causal_conv_backward(x.data(), w.data(), up.data(), *dims);
                vec![
                    Tensor::new(x.shape().to_vec(), dx).expect("shape"),
                    Tensor::new(w.shape().to_vec(), dw).expect("shape"),
                    Tensor::vector(db),
                ]
            }
            Op::BatchNorm {
                x_hat,
                inv_std,
                batch_stats,
            } => {
                let x = self.pv(idx, 0);
                let gamma = self.pv(idx, 1).data();
                let (b, f) = (x.shape()[0], x.shape()[1]);
                let mut dgamma = vec![0.0; f];
                let mut dbeta = vec![0.0; f];
                for i in 0..b {
                    for j in 0..f {
                        let g = up.data()[i * f + j];
                        dbeta[j] += g;
                        dgamma[j] += g * x_hat[i * f + j];
                    }
                }
                let mut dx = vec![0.0; x.numel()];
                let bn = b as f64;
                for i in 0..b {
                    for j in 0..f {
                        let g = up.data()[i * f + j];
                        dx[i * f + j] = if *batch_stats {
                            gamma[j] * inv_std[j] / bn * (bn * g - dbeta[j] - x_hat[i * f + j] * dgamma[j])
                        } else {
                            g * gamma[j] * inv_std[j]
                        };
                    }
                }
                if *batch_stats {
                    // Each column of dx sums to zero analytically. Fixing the
                    // last row to minus the running sum of the others makes
                    // that exact, so a bias feeding this op gets an exactly
                    // zero gradient instead of rounding residue.
                    for j in 0..f {
                        let mut acc = 0.0;
                        for i in 0..b - 1 {
                            acc += dx[i * f + j];
                        }
                        dx[(b - 1) * f + j] = -acc;
                    }
                }
                vec![
                    Tensor::new(x.shape().to_vec(), dx).expect("shape"),
                    Tensor::vector(dgamma),
                    Tensor::vector(dbeta),
                ]
            }
            Op::Custom(c) => {
                let inputs: Vec<&Tensor> = (0..node.parents.len()).map(|i| self.pv(idx, i)).collect();
                c.backward(&inputs, out, up)
            }
        }
    }

    // ---- operations -------------------------------------------------------

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn elementwise2(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op_static_name(&op), a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(t, op, vec![a, b]))
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a).map(f);
        self.push(t, op, vec![a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2(Op::Sub, a, b, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2(Op::Mul, a, b, |x, y| x * y)
    }

    /// Elementwise quotient; every divisor must be nonzero.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if let Some(z) = self.value(b).data().iter().find(|v| **v == 0.0 || !v.is_finite()) {
            return Err(Error::Domain {
                op: "div",
                detail: format!("divisor {z}"),
            });
        }
        self.elementwise2(Op::Div, a, b, |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(Op::Scale(s), a, |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(Op::AddScalar, a, |x| x + s)
    }

    /// `[m,k] × [k,n] → [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul, vec![a, b]))
    }

    /// Adds a vector `[n]` to every row of `x[..., n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.len() != 1 || sx.last() != Some(&sb[0]) {
            return Err(Error::shape("add_bias", sx, sb));
        }
        let n = sb[0];
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        let t = Tensor::new(sx.to_vec(), data)?;
        Ok(self.push(t, Op::AddBias, vec![x, bias]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Op::Relu, a, |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::Sigmoid, a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh, a, f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Op::Exp, a, f64::exp)
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(z) = self.value(a).data().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("argument {z}"),
            });
        }
        Ok(self.unary(Op::Log, a, f64::ln))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Op::Square, a, |x| x * x)
    }

    /// `ln(1 + eˣ)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Op::Softplus, a, softplus)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(Op::Clamp(lo, hi), a, |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum, vec![a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.data().iter().sum::<f64>() / x.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean, vec![a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = Tensor::axis_extents(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let dim = t.shape()[axis];
                let start = o * dim * inner;
                data.extend_from_slice(&t.data()[start..start + dim * inner]);
            }
        }
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::Concat(axis), parts.to_vec()))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::shape("slice", &s, &[axis, start, len]));
        }
        let (outer, dim, inner) = Tensor::axis_extents(&s, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * dim + start) * inner;
            data.extend_from_slice(&src[from..from + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::Slice { axis, start }, vec![a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape, vec![a]))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, a: Var, ax1: usize, ax2: usize) -> Result<Var> {
        let x = self.value(a);
        if ax1 >= x.rank() || ax2 >= x.rank() {
            return Err(Error::shape("transpose", x.shape(), &[ax1, ax2]));
        }
        let (shape, data) = kernels::transpose(x.shape(), x.data(), ax1, ax2);
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::Transpose(ax1, ax2), vec![a]))
    }

    /// Prepends `n` zeros along the last (time) axis.
    pub fn pad_left(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        let t = *x.shape().last().expect("rank >= 1");
        let mut data = Vec::with_capacity(x.numel() / t * (t + n));
        for row in x.data().chunks(t) {
            data.extend(std::iter::repeat_n(0.0, n));
            data.extend_from_slice(row);
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("rank") += n;
        let t = Tensor::new(shape, data).expect("shape");
        self.push(t, Op::PadLeft(n), vec![a])
    }

    /// Identity forward; gradient multiplied by −1 on the way back.
    pub fn grad_reverse(&mut self, a: Var) -> Var {
        let t = self.value(a).clone();
        self.push(t, Op::GradReverse, vec![a])
    }

    /// Row-wise reparameterisation `w[r] = g[r] · v[r] / ‖v[r]‖`, where a
    /// row is everything past the first axis of `v`.
    pub fn weight_norm(&mut self, v: Var, gain: Var) -> Result<Var> {
        let (sv, sg) = (self.shape(v), self.shape(gain));
        if sg.len() != 1 || sv[0] != sg[0] {
            return Err(Error::shape("weight_norm", sv, sg));
        }
        let rows = sg[0];
        let vt = self.value(v);
        let width = vt.numel() / rows;
        let g = self.value(gain).data();
        let mut norms = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(vt.numel());
        for r in 0..rows {
            let row = &vt.data()[r * width..(r + 1) * width];
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 0.0) {
                return Err(Error::Domain {
                    op: "weight_norm",
                    detail: format!("row {r} has zero norm"),
                });
            }
            norms.push(n);
            data.extend(row.iter().map(|x| g[r] * x / n));
        }
        let t = Tensor::new(vt.shape().to_vec(), data)?;
        Ok(self.push(t, Op::WeightNorm { norms }, vec![v, gain]))
    }

    /// Causal dilated convolution: `x[B,C,T]`, `w[O,C,K]`, `bias[O]` → `[B,O,T]`.
    pub fn causal_conv1d(&mut self, x: Var, w: Var, bias: Var, dilation: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(bias));
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] {
            return Err(Error::shape("causal_conv1d", sx, sw));
        }
        if sb != [sw[0]] {
            return Err(Error::shape("causal_conv1d", sw, sb));
        }
        if dilation == 0 {
            return Err(Error::contract("dilation must be >= 1"));
        }
        let dims = ConvDims {
            batch: sx[0],
            in_ch: sx[1],
            out_ch: sw[0],
            len: sx[2],
            kernel: sw[2],
            dilation,
        };
        let y = kernels::causal_conv_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(bias).data(),
            dims,
        );
        let t = Tensor::new(vec![dims.batch, dims.out_ch, dims.len], y)?;
        Ok(self.push(t, Op::CausalConv(dims), vec![x, w, bias]))
    }

    /// Batch normalisation of `x[B,F]`. With `running = None` the batch's own
    /// (biased) statistics are used and differentiated through; otherwise the
    /// given mean/variance are treated as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(Error::shape("batch_norm", &sx, self.shape(gamma)));
        }
        let (b, f) = (sx[0], sx[1]);
        for p in [gamma, beta] {
            if self.shape(p) != [f] {
                return Err(Error::shape("batch_norm", &sx, self.shape(p)));
            }
        }
        let xd = self.value(x).data();
        let (mean, var) = match running {
            Some((m, v)) => {
                if m.len() != f || v.len() != f {
                    return Err(Error::shape("batch_norm", &sx, &[m.len(), v.len()]));
                }
                (m.to_vec(), v.to_vec())
            }
            None => batch_moments(xd, b, f),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let be = self.value(beta).data();
        let mut x_hat = Vec::with_capacity(xd.len());
        let mut y = Vec::with_capacity(xd.len());
        for i in 0..b {
            for j in 0..f {
                let h = (xd[i * f + j] - mean[j]) * inv_std[j];
                x_hat.push(h);
                y.push(g[j] * h + be[j]);
            }
        }
        let t = Tensor::new(sx, y)?;
        let op = Op::BatchNorm {
            x_hat,
            inv_std,
            batch_stats: running.is_none(),
        };
        Ok(self.push(t, op, vec![x, gamma, beta]))
    }

    pub fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let t = op.forward(&values)?;
        Ok(self.push(t, Op::Custom(op), inputs.to_vec()))
    }
}

fn op_static_name(op: &Op) -> &'static str {
    match op {
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Div => "div",
        _ => "op",
    }
}

/// Per-column mean and biased variance of a row-major `[b, f]` matrix.
pub(crate) fn batch_moments(x: &[f64], b: usize, f: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; f];
    for row in x.chunks(f) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let mut var = vec![0.0; f];
    for row in x.chunks(f) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= b as f64);
    (mean, var)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
