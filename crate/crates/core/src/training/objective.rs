use crate::autodiff::{check_gradients_by, FdOptions, FdReport, Graph, Tensor, Var};
use crate::error::Result;
use crate::model::{DannModel, Family, GaussianPrediction, ModelConfig};
use crate::nn::Ctx;

use super::{assemble_objective, bce_terms, regression_terms, LossMode};

/// One adversarial minibatch: `b` source windows followed by `b` target
/// windows.
#[derive(Clone, Debug)]
pub struct DannBatch {
    pub source_x: Tensor,
    pub source_y: Tensor,
    pub target_x: Tensor,
    /// Target labels; `None` for unsupervised adaptation.
    pub target_y: Option<Tensor>,
}

/// Graph handles of the pieces of the adversarial objective.
#[derive(Clone, Copy, Debug)]
pub struct DannLosses {
    pub source: Var,
    pub target: Option<Var>,
    /// Source plus (if supervised) target regression loss.
    pub regression: Var,
    pub domain: Var,
    /// Unreduced per-element terms behind `source`, `target` and `domain`.
    pub source_terms: Var,
    pub target_terms: Option<Var>,
    pub domain_terms: Var,
    pub domain_prob: Var,
    pub domain_labels: Var,
}

impl DannBatch {
    pub fn len(&self) -> usize {
        self.source_x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Domain labels: 0 for the source half, 1 for the target half.
    pub fn domain_labels(&self) -> Tensor {
        let b = self.len();
        let d = (0..2 * b).map(|i| if i < b { 0.0 } else { 1.0 }).collect();
        Tensor::new(vec![2 * b, 1], d).expect("label shape")
    }
}

/// Runs the extractor once on the concatenated batch and builds every
/// loss term.
pub fn dann_losses(
    g: &mut Graph,
    model: &mut DannModel,
    batch: &DannBatch,
    mode: LossMode,
    ctx: &mut Ctx,
) -> Result<DannLosses> {
    let b = batch.len();
    let xs = g.constant(batch.source_x.clone());
    let xt = g.constant(batch.target_x.clone());
    let x = g.concat(&[xs, xt], 0)?;
    let out = model.forward_train(g, x, ctx)?;
    let half = |g: &mut Graph, start| -> Result<GaussianPrediction> {
        Ok(GaussianPrediction {
            mu: g.slice(out.prediction.mu, 0, start, b)?,
            sigma: g.slice(out.prediction.sigma, 0, start, b)?,
        })
    };
    let src_pred = half(g, 0)?;
    let ys = g.constant(batch.source_y.clone());
    let source_terms = regression_terms(g, mode, src_pred, ys)?;
    let source = g.mean(source_terms);
    let mut regression = source;
    let mut target = None;
    let mut target_terms = None;
    if let Some(yt) = &batch.target_y {
        let tgt_pred = half(g, b)?;
        let yt = g.constant(yt.clone());
        let terms = regression_terms(g, mode, tgt_pred, yt)?;
        let l = g.mean(terms);
        regression = g.add(regression, l)?;
        target = Some(l);
        target_terms = Some(terms);
    }
    let labels = batch.domain_labels();
    let domain_terms = bce_terms(g, out.domain_prob, &labels)?;
    let domain = g.mean(domain_terms);
    let domain_labels = g.constant(labels);
    Ok(DannLosses {
        source,
        target,
        regression,
        domain,
        source_terms,
        target_terms,
        domain_terms,
        domain_prob: out.domain_prob,
        domain_labels,
    })
}

/// Checks the backward pass of the assembled objective `L_r + λ·L_d` (with
/// the reversal in place) against central differences of what each
/// parameter group is meant to descend: `L_r − λ·L_d` for extractor and
/// regressor parameters, `L_r + λ·L_d` for discriminator parameters.
/// The first discriminator bias is checked as an invariant parameter (see
/// [`FdOptions::invariant_params`]).
pub fn check_dann_gradients(
    model: &mut DannModel,
    batch: &DannBatch,
    lambda: f64,
    mode: LossMode,
    opts: &FdOptions,
) -> Result<FdReport> {
    // The first discriminator bias feeds batch normalisation with batch
    // statistics, which removes any per-feature shift.
    let mut opts = opts.clone();
    opts.invariant_params.push("discriminator.fc1.bias".into());
    check_gradients_by(
        model,
        |g, m, param| {
            let l = dann_losses(g, m, batch, mode, &mut Ctx::train(0))?;
            match param {
                None => assemble_objective(g, l.regression, l.domain, lambda),
                Some(name) => {
                    let sign = if name.starts_with("discriminator.") { 1.0 } else { -1.0 };
                    let mut parts = vec![(l.source_terms, 1.0)];
                    parts.extend(l.target_terms.map(|t| (t, 1.0)));
                    parts.push((l.domain_terms, sign * lambda));
                    // Terms summing to L_r ± λ·L_d, flattened.
                    let flat = parts
                        .into_iter()
                        .map(|(t, w)| {
                            let n = g.value(t).numel();
                            let t = g.reshape(t, &[n])?;
                            Ok(g.scale(t, w / n as f64))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    g.concat(&flat, 0)
                }
            }
        },
        &opts,
    )
}

/// Model shape at which [`check_dann_gradients`] is run by the gradient
/// check report: one backbone layer, three channels, four steps, and a
/// three-unit discriminator, fed four windows per domain.
///
/// Central differences at step 1e-6 carry roughly 1e-10 of absolute
/// rounding noise from the f64 forward pass, so the relative-error metric
/// is only informative when every gradient entry is well above ~1e-5.
/// Deeper or wider models produce entries below that (dead or saturated
/// units, constant-across-batch features that batch normalisation
/// removes); this shape keeps them out across seeds.
pub fn gradcheck_config(family: Family) -> ModelConfig {
    ModelConfig {
        family,
        depth: 1,
        hidden: 3,
        seq_len: 4,
        disc_hidden: 3,
        ..ModelConfig::default()
    }
}

/// Windows per domain used with [`gradcheck_config`].
pub const GRADCHECK_BATCH: usize = 4;
