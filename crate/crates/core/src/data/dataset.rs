use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{simulate_seasons, window_season, NormalizationStats, SimulatorConfig, WindowedBatch};
use super::{FEATURES, WINDOW_LEN};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Windows stacked into tensors: `x: [N, T, 5]`, `y: [N, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Tensor,
}

impl Dataset {
    pub fn from_windows(windows: &[WindowedBatch]) -> Result<Self> {
        let first = windows.first().ok_or_else(|| Error::contract("empty dataset"))?;
        let t = first.labels.len();
        if windows.iter().any(|w| w.labels.len() != t || w.features.len() != t) {
            return Err(Error::contract("windows of unequal length"));
        }
        let n = windows.len();
        let x = windows
            .iter()
            .flat_map(|w| w.features.iter().flatten().copied())
            .collect();
        let y = windows.iter().flat_map(|w| w.labels.iter().copied()).collect();
        Ok(Dataset {
            x: Tensor::new(vec![n, t, FEATURES], x)?,
            y: Tensor::new(vec![n, t], y)?,
        })
    }

    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seq_len(&self) -> usize {
        self.x.shape()[1]
    }

    /// Rows `idx` as a `([k, T, 5], [k, T])` pair.
    pub fn gather(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let t = self.seq_len();
        let xw = t * FEATURES;
        let mut x = Vec::with_capacity(idx.len() * xw);
        let mut y = Vec::with_capacity(idx.len() * t);
        for &i in idx {
            x.extend_from_slice(&self.x.data()[i * xw..(i + 1) * xw]);
            y.extend_from_slice(&self.y.data()[i * t..(i + 1) * t]);
        }
        (
            Tensor::new(vec![idx.len(), t, FEATURES], x).expect("gather shape"),
            Tensor::new(vec![idx.len(), t], y).expect("gather shape"),
        )
    }
}

/// Normalised source / target-train / target-test sets plus the source
/// statistics used to normalise all three.
#[derive(Clone, Debug)]
pub struct DomainData {
    pub source: Dataset,
    pub target_train: Dataset,
    pub target_test: Dataset,
    pub stats: NormalizationStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source_seasons: usize,
    pub target_windows: usize,
    pub stride: usize,
    pub window_len: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source_seasons: 400,
            target_windows: 46,
            stride: 11,
            window_len: WINDOW_LEN,
            train_fraction: 0.5,
            split_seed: 0,
        }
    }
}

/// Raw (unnormalised) windows for both domains.
pub struct DomainWindows {
    pub source: Vec<WindowedBatch>,
    pub target_train: Vec<WindowedBatch>,
    pub target_test: Vec<WindowedBatch>,
}

impl DataConfig {
    pub fn windows_per_season(&self, season_length: usize) -> usize {
        if season_length <= self.window_len {
            0
        } else {
            (season_length - self.window_len - 1) / self.stride + 1
        }
    }

    /// Seasons needed to yield at least `target_windows` windows.
    pub fn target_seasons(&self, season_length: usize) -> Result<usize> {
        let per = self.windows_per_season(season_length);
        if per == 0 {
            return Err(Error::contract("season too short for one window"));
        }
        Ok(self.target_windows.div_ceil(per))
    }

    /// Windows source seasons, and splits a seeded shuffle of exactly
    /// `target_windows` target windows into train and test.
    pub fn split(&self, source: &[super::CropSeason], target: &[super::CropSeason]) -> Result<DomainWindows> {
        let win = |seasons: &[super::CropSeason], d| -> Vec<WindowedBatch> {
            seasons
                .iter()
                .flat_map(|s| window_season(s, self.window_len, self.stride, d))
                .collect()
        };
        let source = win(source, 0);
        let mut target = win(target, 1);
        if target.len() < self.target_windows {
            return Err(Error::contract(format!(
                "need {} target windows, seasons yield {}",
                self.target_windows,
                target.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.split_seed);
        target.shuffle(&mut rng);
        target.truncate(self.target_windows);
        let n_train = (self.target_windows as f64 * self.train_fraction).round() as usize;
        if n_train == 0 || n_train >= self.target_windows {
            return Err(Error::contract("train fraction leaves an empty split"));
        }
        let target_test = target.split_off(n_train);
        Ok(DomainWindows {
            source,
            target_train: target,
            target_test,
        })
    }
}

impl DomainWindows {
    pub fn normalize(&self) -> Result<DomainData> {
        let stats = NormalizationStats::fit(&self.source)?;
        Ok(DomainData {
            source: stats.apply_dataset(&self.source)?,
            target_train: stats.apply_dataset(&self.target_train)?,
            target_test: stats.apply_dataset(&self.target_test)?,
            stats,
        })
    }
}

/// Simulates both domains and returns raw windows.
pub fn make_domain_datasets(
    source_cfg: &SimulatorConfig,
    target_cfg: &SimulatorConfig,
    data: &DataConfig,
) -> Result<DomainWindows> {
    source_cfg.validate()?;
    target_cfg.validate()?;
    let source = simulate_seasons(source_cfg, 0, data.source_seasons);
    // Target ids continue after the source ids so the two domains never share
    // an RNG stream, even under the same seed.
    let target = simulate_seasons(
        target_cfg,
        data.source_seasons as u64,
        data.target_seasons(target_cfg.season_length)?,
    );
    data.split(&source, &target)
}
