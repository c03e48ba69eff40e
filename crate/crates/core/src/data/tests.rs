use proptest::prelude::*;

use super::*;
use crate::error::Error;

fn quiet() -> SimulatorConfig {
    SimulatorConfig {
        temp_noise: 0.0,
        humidity_noise: 0.0,
        irradiation_noise: 0.0,
        obs_noise: 0.0,
        irr_coef: 0.0,
        ..SimulatorConfig::default()
    }
}

#[test]
fn window_counts() {
    let s = simulate_season(&SimulatorConfig::default(), 0);
    assert_eq!(s.len(), 173);
    let w = window_season(&s, 11, 11, 0);
    assert_eq!(w.len(), (173 - 12) / 11 + 1);
    assert_eq!(w.len(), 15);
    let starts: Vec<usize> = w.iter().map(|w| w.start_day).collect();
    assert_eq!(starts, (0..15).map(|i| 1 + 11 * i).collect::<Vec<_>>());

    let short = CropSeason {
        season_id: 0,
        days: s.days[..12].to_vec(),
    };
    assert_eq!(window_season(&short, 11, 1, 0).len(), 1);
    let too_short = CropSeason {
        season_id: 0,
        days: s.days[..11].to_vec(),
    };
    assert!(window_season(&too_short, 11, 1, 0).is_empty());
}

#[test]
fn labels_are_next_day_lai() {
    for id in 0..20 {
        let s = simulate_season(&SimulatorConfig::default(), id);
        for stride in [1, 11] {
            for w in window_season(&s, 11, stride, 1) {
                for t in 0..11 {
                    assert_eq!(w.features[t][0], s.days[w.start_day - 1 + t].lai);
                    assert_eq!(w.labels[t], s.days[w.start_day + t].lai);
                }
                assert_eq!(w.domain, 1);
            }
        }
    }
}

#[test]
fn default_accounting() {
    let data = DataConfig::default();
    let w = make_domain_datasets(
        &SimulatorConfig::default(),
        &SimulatorConfig::default().shifted(&ShiftDeltas::default()),
        &data,
    )
    .unwrap();
    assert_eq!(w.source.len(), 6000);
    assert_eq!(w.target_train.len(), 23);
    assert_eq!(w.target_test.len(), 23);
    assert!(w.source.iter().all(|w| w.domain == 0));
    assert!(w.target_train.iter().chain(&w.target_test).all(|w| w.domain == 1));
    assert_eq!(data.target_seasons(173).unwrap(), 4);
}

#[test]
fn noiseless_lai_is_monotone_around_senescence() {
    let cfg = quiet();
    let s = simulate_season(&cfg, 3);
    let onset = cfg.senescence_day();
    let lai: Vec<f64> = s.days.iter().map(|d| d.lai).collect();
    assert!(lai[..onset].windows(2).all(|w| w[1] >= w[0]));
    assert!(lai[onset - 1..].windows(2).all(|w| w[1] <= w[0]));
    assert!(lai[onset - 1] > lai[172]);
}

#[test]
fn cold_season_stays_at_left_asymptote() {
    let cfg = SimulatorConfig {
        t_base: 100.0,
        senescence_onset: 1.0,
        ..quiet()
    };
    let s = simulate_season(&cfg, 0);
    let expect = cfg.lai_max / (1.0 + (cfg.steepness * cfg.tt_midpoint).exp());
    for d in &s.days {
        assert!((d.lai - expect).abs() < 1e-15);
    }
}

#[test]
fn same_seed_same_season() {
    let cfg = SimulatorConfig {
        seed: 7,
        ..SimulatorConfig::default()
    };
    assert_eq!(simulate_season(&cfg, 5), simulate_season(&cfg, 5));
    assert_ne!(simulate_season(&cfg, 5), simulate_season(&cfg, 6));
}

#[test]
fn lai_bound_over_ten_thousand_days() {
    let cfg = SimulatorConfig::default();
    let bound = cfg.lai_max * (1.0 + cfg.irr_coef.abs()) + 5.0 * cfg.obs_noise;
    let seasons = simulate_seasons(&cfg, 0, 58);
    let days: Vec<f64> = seasons.iter().flat_map(|s| s.days.iter().map(|d| d.lai)).collect();
    assert!(days.len() >= 10_000);
    assert_eq!(days.iter().filter(|&&l| !(0.0..=bound).contains(&l)).count(), 0);
}

#[test]
fn larger_lai_shift_raises_mean_target_label() {
    let base = SimulatorConfig::default();
    let data = DataConfig {
        source_seasons: 2,
        ..DataConfig::default()
    };
    let means: Vec<f64> = [-1.0, 0.0, 1.0]
        .iter()
        .map(|&delta| {
            let target = base.shifted(&ShiftDeltas {
                lai_max: delta,
                ..ShiftDeltas::zero()
            });
            let w = make_domain_datasets(&base, &target, &data).unwrap();
            let labels: Vec<f64> = w
                .target_train
                .iter()
                .chain(&w.target_test)
                .flat_map(|w| w.labels.clone())
                .collect();
            labels.iter().sum::<f64>() / labels.len() as f64
        })
        .collect();
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
}

#[test]
fn zero_shift_is_same_distribution() {
    let base = SimulatorConfig::default();
    assert_eq!(base.shifted(&ShiftDeltas::zero()), base);
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let seasons = simulate_seasons(&SimulatorConfig::default(), 10, 3);
    write_seasons_csv(&path, &seasons).unwrap();
    assert_eq!(load_seasons_csv(&path).unwrap(), seasons);
}

fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
    let p = dir.path().join("f.csv");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn csv_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let header = CSV_HEADER.join(",");
    let mut body = format!("{header}\n");
    for day in 1..=5 {
        body += &format!("0,{day},1.0,20,10,50,200\n");
    }
    body += "0,6,1.0,5,10,50,200\n";
    match load_seasons_csv(&write(&dir, &body)) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
        other => panic!("{other:?}"),
    }

    let body = format!("{header}\n0,1,1.0,20,10,50,200\n0,1,1.0,20,10,50,200\n");
    assert!(matches!(
        load_seasons_csv(&write(&dir, &body)),
        Err(Error::Parse { line: 3, .. })
    ));

    let body = format!("{header}\n0,1,abc,20,10,50,200\n");
    assert!(matches!(
        load_seasons_csv(&write(&dir, &body)),
        Err(Error::Parse { line: 2, .. })
    ));

    let body = "season_id,day,lai,t_max_c,t_min_c,humidity_pct\n0,1,1,2,1,50\n";
    assert!(matches!(
        load_seasons_csv(&write(&dir, body)),
        Err(Error::Parse { line: 1, .. })
    ));

    let body = format!("{header}\n0,1,1.0,20,10,50,200\n0,3,1.0,20,10,50,200\n");
    assert!(matches!(
        load_seasons_csv(&write(&dir, &body)),
        Err(Error::Parse { line: 3, .. })
    ));

    assert!(load_seasons_csv(&write(&dir, &format!("{header}\n")))
        .unwrap()
        .is_empty());
}

#[test]
fn csv_rows_may_arrive_unsorted() {
    let dir = tempfile::tempdir().unwrap();
    let header = CSV_HEADER.join(",");
    let body = format!("{header}\n1,2,2.0,20,10,50,200\n0,1,0.5,20,10,50,200\n1,1,1.0,20,10,50,200\n");
    let s = load_seasons_csv(&write(&dir, &body)).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s[1].days.iter().map(|d| d.lai).collect::<Vec<_>>(), vec![1.0, 2.0]);
}

#[test]
fn windows_jsonl_has_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.jsonl");
    let w = window_season(&simulate_season(&SimulatorConfig::default(), 0), 11, 11, 0);
    write_windows_jsonl(&p, &w).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 15);
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["season_id", "start_day", "domain", "features", "labels"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["features"].as_array().unwrap().len(), 11);
    assert_eq!(v["features"][0].as_array().unwrap().len(), 5);
}

fn source_windows(n: usize) -> Vec<WindowedBatch> {
    simulate_seasons(&SimulatorConfig::default(), 0, n)
        .iter()
        .flat_map(|s| window_season(s, 11, 11, 0))
        .collect()
}

#[test]
fn normalisation_round_trip_and_moments() {
    let w = source_windows(5);
    let stats = NormalizationStats::fit(&w).unwrap();
    for win in &w {
        let back = stats.invert(&stats.apply(win));
        for (a, b) in back.features.iter().flatten().zip(win.features.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in back.labels.iter().zip(&win.labels) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let normed: Vec<WindowedBatch> = w.iter().map(|x| stats.apply(x)).collect();
    for c in 0..5 {
        let v: Vec<f64> = normed
            .iter()
            .flat_map(|w| w.features.iter().map(move |f| f[c]))
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9, "channel {c}: {m} {sd}");
    }
}

#[test]
fn constant_channel_passes_through_unscaled() {
    let mut w = source_windows(2);
    for win in &mut w {
        for f in &mut win.features {
            f[3] = 42.0;
        }
    }
    let stats = NormalizationStats::fit(&w).unwrap();
    assert_eq!(stats.feature_std[3], 1.0);
    assert_eq!(stats.apply(&w[0]).features[0][3], 0.0);
}

#[test]
fn normaliser_needs_two_windows() {
    let w = source_windows(1);
    assert!(matches!(NormalizationStats::fit(&w[..1]), Err(Error::Contract(_))));
}

#[test]
fn prediction_inversion_rescales_sigma() {
    let stats = NormalizationStats {
        label_mean: 2.0,
        label_std: 3.0,
        ..NormalizationStats::identity(5)
    };
    let mu = crate::autodiff::Tensor::vector(vec![1.0]);
    let sigma = crate::autodiff::Tensor::vector(vec![0.5]);
    let (m, s) = stats.invert_prediction(&mu, &sigma);
    assert_eq!(m.data(), &[5.0]);
    assert_eq!(s.data(), &[1.5]);
}

#[test]
fn dataset_tensor_layout() {
    let w = source_windows(1);
    let d = Dataset::from_windows(&w).unwrap();
    assert_eq!(d.x.shape(), &[15, 11, 5]);
    assert_eq!(d.y.shape(), &[15, 11]);
    let (x, y) = d.gather(&[2]);
    assert_eq!(x.data()[5 * 4 + 1], w[2].features[4][1]);
    assert_eq!(y.data()[10], w[2].labels[10]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulated_days_satisfy_invariants(seed in any::<u64>(), id in 0u64..1000) {
        let cfg = SimulatorConfig { seed, ..SimulatorConfig::default() };
        let s = simulate_season(&cfg, id);
        prop_assert_eq!(s.len(), 173);
        for d in &s.days {
            prop_assert!(d.t_max_c >= d.t_min_c);
            prop_assert!(d.lai >= 0.0);
            prop_assert!((0.0..=100.0).contains(&d.humidity_pct));
            prop_assert!(d.irradiation_wm2 >= 0.0);
        }
    }

    #[test]
    fn window_count_formula(len in 12usize..200, stride in 1usize..20) {
        let cfg = SimulatorConfig { season_length: len, ..SimulatorConfig::default() };
        let s = simulate_season(&cfg, 0);
        let data = DataConfig { stride, ..DataConfig::default() };
        prop_assert_eq!(window_season(&s, 11, stride, 0).len(), data.windows_per_season(len));
    }
}
