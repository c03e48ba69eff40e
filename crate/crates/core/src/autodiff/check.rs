//! Central finite-difference gradient checking.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::param::{ParamList, Parameterized};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct FdOptions {
    pub step: f64,
    /// Check at most this many randomly chosen entries per parameter tensor.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
    /// Parameters the loss is invariant to by construction (e.g. a bias
    /// feeding batch normalisation). Relative error is meaningless there,
    /// since the central difference is pure rounding noise; instead the
    /// analytic gradient must be exactly zero and the numeric one below
    /// [`INVARIANT_NOISE`], otherwise the entry scores an error of 1.
    pub invariant_params: Vec<String>,
}

/// Largest central difference accepted as rounding noise for an invariant
/// parameter.
pub const INVARIANT_NOISE: f64 = 1e-8;

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            step: 1e-6,
            max_entries_per_param: None,
            seed: 0,
            invariant_params: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdWorst {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
    pub worst: Option<FdWorst>,
}

/// `|a − n| / max(1e-12, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

fn loss_terms<M: ?Sized>(
    model: &mut M,
    loss: &mut impl FnMut(&mut Graph, &mut M, Option<&str>) -> Result<Var>,
    param: &str,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let root = loss(&mut g, model, Some(param))?;
    let v = g.value(root).clone();
    if !v.is_finite() {
        return Err(Error::NonFinite("loss evaluated to a non-finite value".into()));
    }
    Ok(v)
}

/// `Σ (plus_i − minus_i)`, summed with compensation.
fn term_difference(plus: &Tensor, minus: &Tensor) -> Result<f64> {
    if plus.shape() != minus.shape() {
        return Err(Error::shape("finite difference", plus.shape(), minus.shape()));
    }
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (p, m) in plus.data().iter().zip(minus.data()) {
        let x = p - m;
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    Ok(sum + comp)
}

/// Compares the backward-pass gradient of `loss` with respect to every
/// parameter of `model` against central differences.
pub fn check_gradients<M: Parameterized + ?Sized>(
    model: &mut M,
    mut loss: impl FnMut(&mut Graph, &mut M) -> Result<Var>,
    opts: &FdOptions,
) -> Result<FdReport> {
    check_gradients_by(model, |g, m, _| loss(g, m), opts)
}

/// Like [`check_gradients`], but the numeric side may differ per
/// parameter: `loss(g, m, None)` builds the scalar that is differentiated,
/// `loss(g, m, Some(name))` the reference for parameter `name`. Needed
/// wherever a backward rule is not the derivative of the forward value, as
/// with gradient reversal.
///
/// The reference may be a tensor of terms whose sum is the loss. The
/// central difference is then taken term by term before summing, which
/// keeps O(1) parts of the loss that barely move from contributing a full
/// ulp of the total to the rounding noise.
pub fn check_gradients_by<M: Parameterized + ?Sized>(
    model: &mut M,
    mut loss: impl FnMut(&mut Graph, &mut M, Option<&str>) -> Result<Var>,
    opts: &FdOptions,
) -> Result<FdReport> {
    if !(opts.step > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let mut g = Graph::new();
    let root = loss(&mut g, model, None)?;
    let v = g.value(root).item()?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {v}")));
    }
    g.backward(root)?;
    let analytic: Vec<(String, Tensor)> = model
        .named_params()
        .into_iter()
        .map(|(name, p)| {
            let grad = g
                .param_grad(p.id())
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()));
            (name, grad)
        })
        .collect();
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = FdReport {
        max_rel_error: 0.0,
        entries_checked: 0,
        worst: None,
    };
    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let n = grad.numel();
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(k) if k < n => {
                let mut e = index::sample(&mut rng, n, k).into_vec();
                e.sort_unstable();
                e
            }
            _ => (0..n).collect(),
        };
        for j in entries {
            let orig = model.params()[pi].value.data()[j];
            model.params_mut()[pi].value.data_mut()[j] = orig + opts.step;
            let plus = loss_terms(model, &mut loss, name);
            model.params_mut()[pi].value.data_mut()[j] = orig - opts.step;
            let minus = loss_terms(model, &mut loss, name);
            model.params_mut()[pi].value.data_mut()[j] = orig;
            let numeric = term_difference(&plus?, &minus?)? / (2.0 * opts.step);
            let a = grad.data()[j];
            let err = if opts.invariant_params.contains(name) {
                if a == 0.0 && numeric.abs() <= INVARIANT_NOISE {
                    0.0
                } else {
                    1.0
                }
            } else {
                relative_error(a, numeric)
            };
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(FdWorst {
                    param: name.clone(),
                    index: j,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}

/// Maximum relative error between analytic and central-difference gradients
/// of `loss_fn` with respect to `params` (bound as graph variables, in order).
pub fn finite_difference_check(
    mut loss_fn: impl FnMut(&mut Graph, &[Var]) -> Result<Var>,
    params: &[Tensor],
    step: f64,
) -> Result<f64> {
    let mut list = ParamList::from_tensors(params);
    let opts = FdOptions {
        step,
        ..FdOptions::default()
    };
    let report = check_gradients(
        &mut list,
        |g, l| {
            let vars: Vec<Var> = l.0.iter().map(|p| g.param(p)).collect();
            loss_fn(g, &vars)
        },
        &opts,
    )?;
    Ok(report.max_rel_error)
}
