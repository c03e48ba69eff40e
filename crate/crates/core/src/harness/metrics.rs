use crate::autodiff::Tensor;
use crate::error::{Error, Result};

fn check(preds: &Tensor, labels: &Tensor) -> Result<()> {
    if preds.shape() != labels.shape() {
        return Err(Error::shape("metric", preds.shape(), labels.shape()));
    }
    Ok(())
}

/// `(1/TN) ΣΣ |y − ŷ|`
pub fn compute_mae(preds: &Tensor, labels: &Tensor) -> Result<f64> {
    check(preds, labels)?;
    let n = preds.numel() as f64;
    Ok(preds
        .data()
        .iter()
        .zip(labels.data())
        .map(|(p, y)| (y - p).abs())
        .sum::<f64>()
        / n)
}

/// `√((1/TN) ΣΣ (y − ŷ)²)`
pub fn compute_rmse(preds: &Tensor, labels: &Tensor) -> Result<f64> {
    check(preds, labels)?;
    let n = preds.numel() as f64;
    Ok((preds
        .data()
        .iter()
        .zip(labels.data())
        .map(|(p, y)| (y - p).powi(2))
        .sum::<f64>()
        / n)
        .sqrt())
}
