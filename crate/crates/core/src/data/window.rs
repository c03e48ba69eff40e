use serde::{Deserialize, Serialize};

use super::CropSeason;

/// `len` consecutive days of features with next-day LAI labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowedBatch {
    pub season_id: u64,
    /// 1-based first day of the window.
    pub start_day: usize,
    pub domain: u8,
    pub features: Vec<[f64; 5]>,
    pub labels: Vec<f64>,
}

/// Windows starting at days `1, 1 + stride, …`; each needs `len + 1` days.
pub fn window_season(s: &CropSeason, len: usize, stride: usize, domain: u8) -> Vec<WindowedBatch> {
    assert!(len >= 1 && stride >= 1, "window length and stride must be positive");
    let mut out = Vec::new();
    let mut start = 0;
    while start + len < s.days.len() {
        let span = &s.days[start..=start + len];
        out.push(WindowedBatch {
            season_id: s.season_id,
            start_day: start + 1,
            domain,
            features: span[..len].iter().map(|d| d.features()).collect(),
            labels: span[1..].iter().map(|d| d.lai).collect(),
        });
        start += stride;
    }
    out
}
