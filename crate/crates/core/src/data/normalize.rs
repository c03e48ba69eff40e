use serde::{Deserialize, Serialize};

use super::{Dataset, WindowedBatch};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Per-channel z-score statistics fitted on source windows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub label_mean: f64,
    pub label_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl NormalizationStats {
    pub fn identity(features: usize) -> Self {
        NormalizationStats {
            feature_mean: vec![0.0; features],
            feature_std: vec![1.0; features],
            label_mean: 0.0,
            label_std: 1.0,
        }
    }

    /// Population statistics; a constant channel gets std 1.
    pub fn fit(windows: &[WindowedBatch]) -> Result<Self> {
        if windows.len() < 2 {
            return Err(Error::contract("normalisation needs at least 2 windows"));
        }
        let (feature_mean, feature_std) = (0..5)
            .map(|c| mean_std(windows.iter().flat_map(move |w| w.features.iter().map(move |f| f[c]))))
            .unzip();
        let (label_mean, label_std) = mean_std(windows.iter().flat_map(|w| w.labels.iter().copied()));
        Ok(NormalizationStats {
            feature_mean,
            feature_std,
            label_mean,
            label_std,
        })
    }

    pub fn apply(&self, w: &WindowedBatch) -> WindowedBatch {
        WindowedBatch {
            features: w
                .features
                .iter()
                .map(|f| std::array::from_fn(|c| (f[c] - self.feature_mean[c]) / self.feature_std[c]))
                .collect(),
            labels: w.labels.iter().map(|&y| self.normalize_label(y)).collect(),
            ..w.clone()
        }
    }

    pub fn invert(&self, w: &WindowedBatch) -> WindowedBatch {
        WindowedBatch {
            features: w
                .features
                .iter()
                .map(|f| std::array::from_fn(|c| f[c] * self.feature_std[c] + self.feature_mean[c]))
                .collect(),
            labels: w.labels.iter().map(|&y| self.denormalize_label(y)).collect(),
            ..w.clone()
        }
    }

    pub fn normalize_label(&self, y: f64) -> f64 {
        (y - self.label_mean) / self.label_std
    }

    pub fn denormalize_label(&self, y: f64) -> f64 {
        y * self.label_std + self.label_mean
    }

    /// Maps a normalised `(μ, σ)` prediction back to label units.
    pub fn invert_prediction(&self, mu: &Tensor, sigma: &Tensor) -> (Tensor, Tensor) {
        (mu.map(|m| self.denormalize_label(m)), sigma.map(|s| s * self.label_std))
    }

    pub fn apply_dataset(&self, windows: &[WindowedBatch]) -> Result<Dataset> {
        let normalized: Vec<WindowedBatch> = windows.iter().map(|w| self.apply(w)).collect();
        Dataset::from_windows(&normalized)
    }
}
