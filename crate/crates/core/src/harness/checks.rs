//! Structural checks on the adversarial model, shared by the test suites
//! and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Parameterized, Tensor, Var};
use crate::data::FEATURES;
use crate::error::Result;
use crate::model::{DannModel, ModelConfig};
use crate::nn::{Ctx, Tcn};
use crate::training::{assemble_objective, dann_losses, sgd_step, DannBatch, DannLosses, LossMode};

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("non-empty shape")
}

/// `b` uniform(−1, 1) windows per domain.
pub fn random_dann_batch(rng: &mut ChaCha8Rng, b: usize, t: usize, supervised: bool) -> DannBatch {
    DannBatch {
        source_x: random_tensor(rng, &[b, t, FEATURES]),
        source_y: random_tensor(rng, &[b, t]),
        target_x: random_tensor(rng, &[b, t, FEATURES]),
        target_y: supervised.then(|| random_tensor(rng, &[b, t])),
    }
}

/// Gradients of the loss chosen by `pick`, in `named_params` order, read
/// straight from the graph.
fn grads_of(
    model: &mut DannModel,
    batch: &DannBatch,
    pick: impl Fn(&mut Graph, DannLosses) -> Result<Var>,
) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let l = dann_losses(&mut g, model, batch, LossMode::GaussianNll, &mut Ctx::train(0))?;
    let root = pick(&mut g, l)?;
    g.backward(root)?;
    Ok(model
        .params()
        .iter()
        .map(|p| {
            g.param_grad(p.id())
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
        })
        .collect())
}

/// Largest absolute difference between the parameters after one SGD step
/// on the assembled objective and the three explicit updates
///
/// ```text
/// θ_f ← θ_f − μ(∂L_r/∂θ_f − λ·∂L_d/∂θ_f)
/// θ_r ← θ_r − μ·∂L_r/∂θ_r
/// θ_d ← θ_d − μ·λ·∂L_d/∂θ_d
/// ```
///
/// with `∂L_r` and `∂L_d` from separate backward passes without gradient
/// reversal. Model, batch, λ and μ are drawn from `seed`.
pub fn update_rule_gap(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DannModel::new(ModelConfig::default(), seed)?;
    let batch = random_dann_batch(&mut rng, 4, model.config().seq_len, true);
    let lambda = rng.random_range(0.0..2.0);
    let lr = rng.random_range(1e-4..1e-1);

    let mut stepped = model.clone();
    {
        let mut g = Graph::new();
        let l = dann_losses(&mut g, &mut stepped, &batch, LossMode::GaussianNll, &mut Ctx::train(0))?;
        let total = assemble_objective(&mut g, l.regression, l.domain, lambda)?;
        g.backward(total)?;
        stepped.zero_grads();
        stepped.accumulate_grads(&g);
        sgd_step(&mut stepped, lr)?;
    }

    let mut plain = model.clone();
    plain.discriminator.reverse_gradient = false;
    let grad_r = grads_of(&mut plain, &batch, |_, l| Ok(l.regression))?;
    let grad_d = grads_of(&mut plain, &batch, |_, l| Ok(l.domain))?;

    let mut gap: f64 = 0.0;
    let before = model.named_params();
    let after = stepped.params();
    for (i, (name, p0)) in before.iter().enumerate() {
        let (gr, gd) = (grad_r[i].data(), grad_d[i].data());
        for (j, (&theta, &new)) in p0.value.data().iter().zip(after[i].value.data()).enumerate() {
            let expected = if name.starts_with("extractor.") {
                theta - lr * (gr[j] - lambda * gd[j])
            } else if name.starts_with("regressor.") {
                theta - lr * gr[j]
            } else {
                theta - lr * lambda * gd[j]
            };
            gap = gap.max((new - expected).abs());
        }
    }
    Ok(gap)
}

/// Outcome of [`grl_contract`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrlReport {
    /// Forward values through the reversal equal the features bit for bit,
    /// and the domain probabilities match the unreversed model.
    pub forward_identical: bool,
    /// Extractor gradients of `λ·L_d` equal `−λ` times the unreversed
    /// gradient of `L_d`, bit for bit.
    pub extractor_negated: bool,
    /// Regressor and discriminator gradients are unaffected.
    pub others_unchanged: bool,
    /// Some compared extractor entry was nonzero (guards a vacuous pass).
    pub nontrivial: bool,
}

impl GrlReport {
    pub fn passed(&self) -> bool {
        self.forward_identical && self.extractor_negated && self.others_unchanged
    }
}

/// Checks the gradient reversal contract for one λ.
pub fn grl_contract(seed: u64, lambda: f64) -> Result<GrlReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DannModel::new(ModelConfig::default(), seed)?;
    let batch = random_dann_batch(&mut rng, 4, model.config().seq_len, false);

    let mut reversed = model.clone();
    let mut g = Graph::new();
    let l = dann_losses(&mut g, &mut reversed, &batch, LossMode::GaussianNll, &mut Ctx::train(0))?;
    let features = find_features(&g, l.domain_prob);
    let forward_reversed = g.value(l.domain_prob).clone();
    let weighted = g.scale(l.domain, lambda);
    g.backward(weighted)?;
    let with: Vec<Tensor> = reversed
        .params()
        .iter()
        .map(|p| {
            g.param_grad(p.id())
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
        })
        .collect();
    let identity_ok = match features {
        Some((feat, rev)) => g.value(feat) == g.value(rev),
        None => false,
    };

    let mut plain = model.clone();
    plain.discriminator.reverse_gradient = false;
    let mut g2 = Graph::new();
    let l2 = dann_losses(&mut g2, &mut plain, &batch, LossMode::GaussianNll, &mut Ctx::train(0))?;
    let forward_plain = g2.value(l2.domain_prob).clone();
    g2.backward(l2.domain)?;
    let without: Vec<Tensor> = plain
        .params()
        .iter()
        .map(|p| {
            g2.param_grad(p.id())
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
        })
        .collect();

    let mut report = GrlReport {
        forward_identical: identity_ok && forward_reversed == forward_plain,
        extractor_negated: true,
        others_unchanged: true,
        nontrivial: false,
    };
    for ((name, _), (a, b)) in model.named_params().iter().zip(with.iter().zip(&without)) {
        for (&u, &v) in a.data().iter().zip(b.data()) {
            if name.starts_with("extractor.") {
                report.extractor_negated &= u == -lambda * v;
                report.nontrivial |= v != 0.0;
            } else {
                report.others_unchanged &= u == lambda * v;
            }
        }
    }
    Ok(report)
}

/// Walks back from the discriminator output to the reversal node; returns
/// `(features, reversed)`.
fn find_features(g: &Graph, from: Var) -> Option<(Var, Var)> {
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        if g.op_name(v) == "grad_reverse" {
            return Some((g.parents(v)[0], v));
        }
        stack.extend_from_slice(g.parents(v));
    }
    None
}

/// Runs `trials` random 4-block TCN stacks; in each, one input timestep is
/// perturbed and every output before it must be bit-identical. Returns the
/// number of trials with a violation.
pub fn causality_violations(trials: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..trials {
        let channels = rng.random_range(2..=8);
        let kernel = rng.random_range(2..=3);
        let len = rng.random_range(8..=24);
        let tcn = Tcn::new(FEATURES, channels, kernel, &Tcn::default_dilations(4), 0.0, &mut rng);
        let b = 2;
        let x = random_tensor(&mut rng, &[b, FEATURES, len]);
        let tp = rng.random_range(0..len);
        let mut x2 = x.clone();
        for bi in 0..b {
            for c in 0..FEATURES {
                x2.data_mut()[(bi * FEATURES + c) * len + tp] += rng.random_range(-3.0..3.0);
            }
        }
        let run = |x: &Tensor| -> Result<Tensor> {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = tcn.forward(&mut g, xv, &mut Ctx::eval())?;
            Ok(g.value(y).clone())
        };
        let (y1, y2) = (run(&x)?, run(&x2)?);
        let out_ch = tcn.out_channels();
        let mut bad = false;
        for bi in 0..b {
            for c in 0..out_ch {
                for t in 0..tp {
                    let i = (bi * out_ch + c) * len + t;
                    bad |= y1.data()[i].to_bits() != y2.data()[i].to_bits();
                }
            }
        }
        violations += bad as usize;
    }
    Ok(violations)
}
