use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub lai: f64,
    pub t_max_c: f64,
    pub t_min_c: f64,
    pub humidity_pct: f64,
    pub irradiation_wm2: f64,
}

impl DailyRecord {
    pub fn features(&self) -> [f64; 5] {
        [
            self.lai,
            self.t_max_c,
            self.t_min_c,
            self.humidity_pct,
            self.irradiation_wm2,
        ]
    }
}

/// One growth cycle; `days[i]` is day `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CropSeason {
    pub season_id: u64,
    pub days: Vec<DailyRecord>,
}

impl CropSeason {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// Parameters of the weather and thermal-time growth model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub season_length: usize,
    pub tmax_mean: f64,
    pub tmax_amplitude: f64,
    pub tmin_mean: f64,
    pub tmin_amplitude: f64,
    pub temp_noise: f64,
    pub humidity_mean: f64,
    pub humidity_amplitude: f64,
    pub humidity_noise: f64,
    pub irradiation_mean: f64,
    pub irradiation_amplitude: f64,
    pub irradiation_noise: f64,
    pub t_base: f64,
    pub lai_max: f64,
    pub tt_midpoint: f64,
    pub steepness: f64,
    /// Senescence starts at this fraction of the season.
    pub senescence_onset: f64,
    pub senescence_rate: f64,
    pub irr_coef: f64,
    pub obs_noise: f64,
    pub seed: u64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            season_length: 173,
            tmax_mean: 22.0,
            tmax_amplitude: 8.0,
            tmin_mean: 10.0,
            tmin_amplitude: 7.0,
            temp_noise: 1.5,
            humidity_mean: 65.0,
            humidity_amplitude: 10.0,
            humidity_noise: 5.0,
            irradiation_mean: 200.0,
            irradiation_amplitude: 60.0,
            irradiation_noise: 25.0,
            t_base: 8.0,
            lai_max: 5.0,
            tt_midpoint: 800.0,
            steepness: 0.006,
            senescence_onset: 0.75,
            senescence_rate: 0.03,
            irr_coef: 0.1,
            obs_noise: 0.05,
            seed: 0,
        }
    }
}

/// Additive offsets turning a source configuration into a target one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftDeltas {
    pub tmax_mean: f64,
    pub tmin_mean: f64,
    pub humidity_mean: f64,
    pub irradiation_mean: f64,
    pub t_base: f64,
    pub lai_max: f64,
    pub tt_midpoint: f64,
    pub steepness: f64,
    pub senescence_rate: f64,
    pub irr_coef: f64,
}

impl ShiftDeltas {
    pub fn zero() -> Self {
        ShiftDeltas {
            tmax_mean: 0.0,
            tmin_mean: 0.0,
            humidity_mean: 0.0,
            irradiation_mean: 0.0,
            t_base: 0.0,
            lai_max: 0.0,
            tt_midpoint: 0.0,
            steepness: 0.0,
            senescence_rate: 0.0,
            irr_coef: 0.0,
        }
    }
}

impl Default for ShiftDeltas {
    /// A warmer, drier field with a smaller, later canopy.
    fn default() -> Self {
        ShiftDeltas {
            tmax_mean: 2.0,
            tmin_mean: 1.5,
            humidity_mean: -8.0,
            irradiation_mean: 20.0,
            t_base: 0.0,
            lai_max: -1.2,
            tt_midpoint: 200.0,
            steepness: 0.0,
            senescence_rate: 0.01,
            irr_coef: 0.05,
        }
    }
}

impl SimulatorConfig {
    pub fn shifted(&self, d: &ShiftDeltas) -> Self {
        SimulatorConfig {
            tmax_mean: self.tmax_mean + d.tmax_mean,
            tmin_mean: self.tmin_mean + d.tmin_mean,
            humidity_mean: self.humidity_mean + d.humidity_mean,
            irradiation_mean: self.irradiation_mean + d.irradiation_mean,
            t_base: self.t_base + d.t_base,
            lai_max: self.lai_max + d.lai_max,
            tt_midpoint: self.tt_midpoint + d.tt_midpoint,
            steepness: self.steepness + d.steepness,
            senescence_rate: self.senescence_rate + d.senescence_rate,
            irr_coef: self.irr_coef + d.irr_coef,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::contract(format!("simulator config: {m}")));
        if self.season_length < 12 {
            return bad("season_length must be at least 12");
        }
        if !(self.lai_max > 0.0) {
            return bad("lai_max must be positive");
        }
        if !(self.steepness > 0.0) {
            return bad("steepness must be positive");
        }
        let noises = [
            self.temp_noise,
            self.humidity_noise,
            self.irradiation_noise,
            self.obs_noise,
        ];
        if noises.iter().any(|n| !(*n >= 0.0)) {
            return bad("noise scales must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.senescence_onset) || !(self.senescence_rate >= 0.0) {
            return bad("senescence onset must lie in [0, 1] and rate be non-negative");
        }
        if !(self.irradiation_mean > 0.0) {
            return bad("irradiation_mean must be positive");
        }
        Ok(())
    }

    /// Day (1-based) after which LAI decays.
    pub fn senescence_day(&self) -> usize {
        (self.senescence_onset * self.season_length as f64).round() as usize
    }
}

fn noise(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Simulates season `season_id` with its own RNG stream, so seasons can be
/// generated in any order or in parallel.
pub fn simulate_season(cfg: &SimulatorConfig, season_id: u64) -> CropSeason {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(season_id);
    let len = cfg.season_length;
    let phase = |day: usize| (std::f64::consts::PI * (day - 1) as f64 / (len - 1) as f64).sin();

    let mut weather = Vec::with_capacity(len);
    for day in 1..=len {
        let s = phase(day);
        let mut tmax = cfg.tmax_mean + cfg.tmax_amplitude * s + noise(&mut rng, cfg.temp_noise);
        let mut tmin = cfg.tmin_mean + cfg.tmin_amplitude * s + noise(&mut rng, cfg.temp_noise);
        if tmax < tmin {
            std::mem::swap(&mut tmax, &mut tmin);
        }
        let hum =
            (cfg.humidity_mean + cfg.humidity_amplitude * s + noise(&mut rng, cfg.humidity_noise)).clamp(0.0, 100.0);
        let irr =
            (cfg.irradiation_mean + cfg.irradiation_amplitude * s + noise(&mut rng, cfg.irradiation_noise)).max(0.0);
        weather.push((tmax, tmin, hum, irr));
    }
    let mean_irr = weather.iter().map(|w| w.3).sum::<f64>() / len as f64;

    let onset = cfg.senescence_day().max(1);
    let mut tt = 0.0;
    let mut lai_at_onset = 0.0;
    let mut days = Vec::with_capacity(len);
    for (i, &(tmax, tmin, hum, irr)) in weather.iter().enumerate() {
        let day = i + 1;
        tt += ((tmax + tmin) / 2.0 - cfg.t_base).max(0.0);
        let lai = if day <= onset {
            let irr_factor = if mean_irr > 0.0 {
                ((irr - mean_irr) / mean_irr).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            let v = cfg.lai_max * logistic(cfg.steepness * (tt - cfg.tt_midpoint)) * (1.0 + cfg.irr_coef * irr_factor);
            lai_at_onset = v.max(0.0);
            lai_at_onset
        } else {
            lai_at_onset * (-cfg.senescence_rate * (day - onset) as f64).exp()
        };
        let observed = (lai + noise(&mut rng, cfg.obs_noise)).max(0.0);
        days.push(DailyRecord {
            lai: observed,
            t_max_c: tmax,
            t_min_c: tmin,
            humidity_pct: hum,
            irradiation_wm2: irr,
        });
    }
    CropSeason { season_id, days }
}

/// Seasons `first_id .. first_id + count`.
pub fn simulate_seasons(cfg: &SimulatorConfig, first_id: u64, count: usize) -> Vec<CropSeason> {
    (0..count as u64).map(|i| simulate_season(cfg, first_id + i)).collect()
}
