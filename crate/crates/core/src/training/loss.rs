use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::GaussianPrediction;

/// `½·ln(2π)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

const BCE_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Negative log-likelihood of the predicted Gaussian.
    #[default]
    GaussianNll,
    /// Negative likelihood (not log), averaged.
    PaperLikelihood,
}

fn check_finite(g: &Graph, vars: &[Var], what: &str) -> Result<()> {
    if vars.iter().all(|&v| g.value(v).is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} inputs")))
    }
}

/// `(y − μ)² / σ²`
fn standardized_sq(g: &mut Graph, pred: GaussianPrediction, y: Var) -> Result<Var> {
    let r = g.sub(y, pred.mu)?;
    let r2 = g.square(r);
    let s2 = g.square(pred.sigma);
    g.div(r2, s2)
}

/// Per-element `ln σ + ½ln2π + (y − μ)²/(2σ²)`.
pub fn gaussian_nll_terms(g: &mut Graph, pred: GaussianPrediction, y: Var) -> Result<Var> {
    check_finite(g, &[pred.mu, pred.sigma, y], "gaussian_nll")?;
    let q = standardized_sq(g, pred, y)?;
    let q = g.scale(q, 0.5);
    let ls = g.log(pred.sigma)?;
    let per = g.add(ls, q)?;
    Ok(g.add_scalar(per, HALF_LN_2PI))
}

/// Mean of [`gaussian_nll_terms`].
pub fn gaussian_nll(g: &mut Graph, pred: GaussianPrediction, y: Var) -> Result<Var> {
    let per = gaussian_nll_terms(g, pred, y)?;
    Ok(g.mean(per))
}

/// Per-element `−exp(−(y − μ)²/(2σ²)) / (√(2π)·σ)`.
pub fn gaussian_paper_terms(g: &mut Graph, pred: GaussianPrediction, y: Var) -> Result<Var> {
    check_finite(g, &[pred.mu, pred.sigma, y], "gaussian_paper_loss")?;
    let q = standardized_sq(g, pred, y)?;
    let q = g.scale(q, -0.5);
    let e = g.exp(q);
    let dens = g.div(e, pred.sigma)?;
    Ok(g.scale(dens, -1.0 / (2.0 * std::f64::consts::PI).sqrt()))
}

/// Mean of [`gaussian_paper_terms`].
pub fn gaussian_paper_loss(g: &mut Graph, pred: GaussianPrediction, y: Var) -> Result<Var> {
    let per = gaussian_paper_terms(g, pred, y)?;
    Ok(g.mean(per))
}

pub fn regression_terms(g: &mut Graph, mode: LossMode, pred: GaussianPrediction, y: Var) -> Result<Var> {
    match mode {
        LossMode::GaussianNll => gaussian_nll_terms(g, pred, y),
        LossMode::PaperLikelihood => gaussian_paper_terms(g, pred, y),
    }
}

pub fn regression_loss(g: &mut Graph, mode: LossMode, pred: GaussianPrediction, y: Var) -> Result<Var> {
    let per = regression_terms(g, mode, pred, y)?;
    Ok(g.mean(per))
}

/// Mean binary cross-entropy with `p` clamped to `[1e-12, 1 − 1e-12]`.
pub fn bce_loss(g: &mut Graph, p: Var, d: &Tensor) -> Result<Var> {
    let per = bce_terms(g, p, d)?;
    Ok(g.mean(per))
}

/// Per-element `−[d·ln p + (1 − d)·ln(1 − p)]`, clamped as in [`bce_loss`].
pub fn bce_terms(g: &mut Graph, p: Var, d: &Tensor) -> Result<Var> {
    if g.shape(p) != d.shape() {
        return Err(Error::shape("bce_loss", g.shape(p), d.shape()));
    }
    if d.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::contract("domain labels must be 0 or 1"));
    }
    check_finite(g, &[p], "bce_loss")?;
    let pc = g.clamp(p, BCE_CLAMP, 1.0 - BCE_CLAMP);
    let lp = g.log(pc)?;
    let q = g.scale(pc, -1.0);
    let q = g.add_scalar(q, 1.0);
    let lq = g.log(q)?;
    let dv = g.constant(d.clone());
    let not_d = g.constant(d.map(|v| 1.0 - v));
    let a = g.mul(dv, lp)?;
    let b = g.mul(not_d, lq)?;
    let ll = g.add(a, b)?;
    Ok(g.scale(ll, -1.0))
}

/// `reg + λ·dom`. With `dom` computed behind the gradient reversal, one
/// descent step on this total moves the extractor against the domain loss
/// while the discriminator descends on it.
pub fn assemble_objective(g: &mut Graph, reg: Var, dom: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::contract(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let weighted = g.scale(dom, lambda);
    g.add(reg, weighted)
}
