use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{Dataset, NormalizationStats};
use crate::error::Result;
use crate::harness::{compute_mae, compute_rmse};
use crate::model::SequenceModel;

use super::loss::HALF_LN_2PI;

const EVAL_CHUNK: usize = 256;

/// Test metrics in label units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    pub rmse: f64,
    pub nll: f64,
    pub windows: usize,
}

/// Denormalised `(μ, σ, y)` for every window of `data`, each `[N, T]`.
pub fn predict_dataset(
    model: &SequenceModel,
    data: &Dataset,
    stats: &NormalizationStats,
) -> Result<(Tensor, Tensor, Tensor)> {
    let n = data.len();
    let t = data.seq_len();
    let mut mu = Vec::with_capacity(n * t);
    let mut sigma = Vec::with_capacity(n * t);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let (x, _) = data.gather(&idx);
        let (m, s) = model.predict(&x)?;
        let (m, s) = stats.invert_prediction(&m, &s);
        mu.extend_from_slice(m.data());
        sigma.extend_from_slice(s.data());
    }
    let y = data.y.map(|v| stats.denormalize_label(v));
    Ok((Tensor::new(vec![n, t], mu)?, Tensor::new(vec![n, t], sigma)?, y))
}

/// MAE and RMSE of `μ`, and the Gaussian NLL, all in label units.
pub fn evaluate(model: &SequenceModel, data: &Dataset, stats: &NormalizationStats) -> Result<EvalReport> {
    let (mu, sigma, y) = predict_dataset(model, data, stats)?;
    let nll = mu
        .data()
        .iter()
        .zip(sigma.data())
        .zip(y.data())
        .map(|((m, s), y)| s.ln() + HALF_LN_2PI + (y - m).powi(2) / (2.0 * s * s))
        .sum::<f64>()
        / y.numel() as f64;
    Ok(EvalReport {
        mae: compute_mae(&mu, &y)?,
        rmse: compute_rmse(&mu, &y)?,
        nll,
        windows: data.len(),
    })
}
