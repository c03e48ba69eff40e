use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Graph, ParamList, Parameterized, Tensor};
use crate::data::{make_domain_datasets, DataConfig, DomainData, ShiftDeltas, SimulatorConfig};
use crate::error::Error;
use crate::harness::{random_tensor, update_rule_gap};
use crate::model::{DannModel, Family, GaussianPrediction, ModelConfig, SequenceModel};
use crate::nn::{Ctx, Mode};

fn pred(g: &mut Graph, mu: &[f64], sigma: &[f64]) -> GaussianPrediction {
    let n = mu.len();
    GaussianPrediction {
        mu: g.constant(Tensor::new(vec![1, n], mu.to_vec()).unwrap()),
        sigma: g.constant(Tensor::new(vec![1, n], sigma.to_vec()).unwrap()),
    }
}

fn row(g: &mut Graph, v: &[f64]) -> crate::autodiff::Var {
    g.constant(Tensor::new(vec![1, v.len()], v.to_vec()).unwrap())
}

fn loss_value(mode: LossMode, mu: &[f64], sigma: &[f64], y: &[f64]) -> f64 {
    let mut g = Graph::new();
    let p = pred(&mut g, mu, sigma);
    let y = row(&mut g, y);
    let l = regression_loss(&mut g, mode, p, y).unwrap();
    g.value(l).item().unwrap()
}

fn bce_value(p: &[f64], d: &[f64]) -> crate::error::Result<f64> {
    let mut g = Graph::new();
    let pv = g.constant(Tensor::new(vec![p.len(), 1], p.to_vec()).unwrap());
    let l = bce_loss(&mut g, pv, &Tensor::new(vec![d.len(), 1], d.to_vec()).unwrap())?;
    Ok(g.value(l).item().unwrap())
}

#[test]
#[allow(clippy::approx_constant)] // the stated closed-form values
fn loss_closed_forms() {
    let y = [0.3, -1.2, 2.0];
    let paper = loss_value(LossMode::PaperLikelihood, &y, &[1.0; 3], &y);
    assert!((paper + 0.398_942_3).abs() < 1e-6, "{paper}");
    let shifted: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
    let paper1 = loss_value(LossMode::PaperLikelihood, &shifted, &[1.0; 3], &y);
    assert!((paper1 + 0.241_970_7).abs() < 1e-6, "{paper1}");

    let nll = loss_value(LossMode::GaussianNll, &y, &[1.0; 3], &y);
    assert!((nll - 0.918_938_5).abs() < 1e-6, "{nll}");
    let shifted: Vec<f64> = y.iter().map(|v| v - 2.0).collect();
    let nll2 = loss_value(LossMode::GaussianNll, &shifted, &[1.0; 3], &y);
    assert!((nll2 - 2.918_938_5).abs() < 1e-6, "{nll2}");

    let ln2 = bce_value(&[0.5, 0.5, 0.5], &[0.0, 1.0, 1.0]).unwrap();
    assert!((ln2 - 0.693_147_2).abs() < 1e-6);
    let b = bce_value(&[0.9], &[0.0]).unwrap();
    assert!((b - 2.302_585_1).abs() < 1e-6);
    let exact = bce_value(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
    assert!((0.0..1e-11).contains(&exact), "{exact}");
}

#[test]
fn large_sigma_paper_loss_vanishes_from_below() {
    let l = loss_value(LossMode::PaperLikelihood, &[0.0], &[1e6], &[0.0]);
    assert!(l < 0.0 && l > -1e-6);
}

#[test]
fn nll_minimised_at_sigma_equal_to_residual() {
    // Brute-force grid over σ for fixed residuals.
    for r in [0.25, 1.0, 3.0] {
        let best = (1..=4000)
            .map(|i| i as f64 * 1e-3)
            .min_by(|a, b| {
                let la = loss_value(LossMode::GaussianNll, &[r], &[*a], &[0.0]);
                let lb = loss_value(LossMode::GaussianNll, &[r], &[*b], &[0.0]);
                la.total_cmp(&lb)
            })
            .unwrap();
        assert!((best - r).abs() <= 1e-3 + 1e-12, "r {r}: {best}");
    }
}

#[test]
fn both_losses_stationary_in_mu_at_the_label() {
    for mode in [LossMode::GaussianNll, LossMode::PaperLikelihood] {
        let mut g = Graph::new();
        let mu = g.variable(Tensor::new(vec![1, 3], vec![0.2, -0.7, 1.5]).unwrap());
        let sigma = row(&mut g, &[0.5, 1.0, 2.0]);
        let y = row(&mut g, &[0.2, -0.7, 1.5]);
        let l = regression_loss(&mut g, mode, GaussianPrediction { mu, sigma }, y).unwrap();
        g.backward(l).unwrap();
        assert!(g.grad(mu).unwrap().data().iter().all(|&v| v == 0.0), "{mode:?}");
    }
}

#[test]
fn loss_contracts() {
    assert!(matches!(bce_value(&[0.5], &[0.5]), Err(Error::Contract(_))));
    let mut g = Graph::new();
    let p = g.constant(Tensor::vector(vec![0.5, 0.5]));
    assert!(matches!(
        bce_loss(&mut g, p, &Tensor::vector(vec![0.0])),
        Err(Error::Shape { .. })
    ));
    let mut g = Graph::new();
    let p = pred(&mut g, &[f64::NAN], &[1.0]);
    let y = row(&mut g, &[0.0]);
    assert!(matches!(gaussian_nll(&mut g, p, y), Err(Error::NonFinite(_))));

    let mut g = Graph::new();
    let a = g.constant(Tensor::scalar(1.0));
    let b = g.constant(Tensor::scalar(1.0));
    assert!(matches!(
        assemble_objective(&mut g, a, b, -0.1),
        Err(Error::Contract(_))
    ));
    let t = assemble_objective(&mut g, a, b, 0.5).unwrap();
    assert_eq!(g.value(t).item().unwrap(), 1.5);
}

proptest! {
    #[test]
    fn bce_is_non_negative(p in prop::collection::vec(0.0f64..=1.0, 1..16), bits in any::<u16>()) {
        let d: Vec<f64> = (0..p.len()).map(|i| ((bits >> (i % 16)) & 1) as f64).collect();
        prop_assert!(bce_value(&p, &d).unwrap() >= 0.0);
    }

    #[test]
    fn paper_loss_is_negative(
        mu in prop::collection::vec(-5.0f64..5.0, 1..8),
        sigma in 0.01f64..20.0,
        y in -5.0f64..5.0,
    ) {
        let n = mu.len();
        let l = loss_value(LossMode::PaperLikelihood, &mu, &vec![sigma; n], &vec![y; n]);
        // strictly negative unless the density underflows to zero
        prop_assert!(l <= 0.0);
        let z = mu.iter().map(|m| ((m - y) / sigma).abs()).fold(0.0, f64::max);
        if z < 30.0 {
            prop_assert!(l < 0.0);
        }
        prop_assert!(l >= -1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma) - 1e-12);
    }
}

#[test]
fn sgd_examples() {
    let mut p = ParamList::from_tensors(&[Tensor::scalar(1.0)]);
    p.0[0].grad = Some(Tensor::scalar(2.0));
    sgd_step(&mut p, 0.1).unwrap();
    assert!((p.0[0].value.item().unwrap() - 0.8).abs() < 1e-15);
    assert_eq!(p.0[0].grad.as_ref().unwrap().item().unwrap(), 0.0);

    // Two steps on (θ − 3)²/2 from 0 with lr 0.5: 0 → 1.5 → 2.25.
    let mut p = ParamList::from_tensors(&[Tensor::scalar(0.0)]);
    for _ in 0..2 {
        let mut g = Graph::new();
        let th = g.param(&p.0[0]);
        let d = g.add_scalar(th, -3.0);
        let sq = g.square(d);
        let l = g.scale(sq, 0.5);
        g.backward(l).unwrap();
        p.accumulate_grads(&g);
        sgd_step(&mut p, 0.5).unwrap();
    }
    assert_eq!(p.0[0].value.item().unwrap(), 2.25);

    let mut p = ParamList::from_tensors(&[Tensor::vector(vec![1.0, -2.0])]);
    p.0[0].grad = Some(Tensor::zeros(&[2]));
    sgd_step(&mut p, 0.3).unwrap();
    assert_eq!(p.0[0].value.data(), &[1.0, -2.0]);

    let mut p = ParamList::from_tensors(&[Tensor::scalar(1.0)]);
    assert!(matches!(sgd_step(&mut p, 0.1), Err(Error::Contract(_))));
    p.0[0].grad = Some(Tensor::scalar(1.0));
    assert!(sgd_step(&mut p, 0.0).is_err());
}

#[test]
fn momentum_accumulates_velocity() {
    let mut p = ParamList::from_tensors(&[Tensor::scalar(0.0)]);
    let mut opt = Sgd::new(0.1, 0.9).unwrap();
    for _ in 0..2 {
        p.0[0].grad = Some(Tensor::scalar(1.0));
        opt.step(&mut p).unwrap();
    }
    // v1 = 1, v2 = 1.9; θ = −0.1 − 0.19
    assert!((p.0[0].value.item().unwrap() + 0.29).abs() < 1e-15);
}

#[test]
fn convergence_examples() {
    assert_eq!(detect_convergence(&[0.5; 60], 20, 1e-4), Some(20));

    let geometric: Vec<f64> = (0..50).map(|e| 0.9f64.powi(e)).collect();
    assert_eq!(detect_convergence(&geometric, 5, 1e-4), None);

    // Still falling until epoch 30, flat afterwards.
    let step: Vec<f64> = (0..60)
        .map(|e| if e < 30 { 1.0 + (30 - e) as f64 } else { 0.1 })
        .collect();
    let e = detect_convergence(&step, 5, 1e-4).unwrap();
    assert!((30..=36).contains(&e), "{e}");

    assert_eq!(detect_convergence(&[1.0; 7], 4, 1e-4), None);
    assert_eq!(detect_convergence(&[1.0; 7], 0, 1e-4), None);
}

#[test]
fn geometric_window_means_stay_apart() {
    // Independent check of the geometric case: consecutive window means
    // differ by the factor 0.9^w, a relative change of 1 − 0.9^5 ≈ 0.41.
    let w = 5;
    let mean = |a: i32| (a..a + w).map(|e| 0.9f64.powi(e)).sum::<f64>() / w as f64;
    let change = (mean(5) - mean(0)).abs() / mean(0);
    assert!((change - (1.0 - 0.9f64.powi(5))).abs() < 1e-12);
}

#[test]
fn ganin_schedule() {
    let cfg = TrainingConfig {
        lambda_mode: LambdaMode::GaninSchedule,
        ..TrainingConfig::default()
    };
    assert_eq!(cfg.lambda_at(0.0), 0.0);
    assert!((cfg.lambda_at(1.0) - (2.0 / (1.0 + (-10.0f64).exp()) - 1.0)).abs() < 1e-15);
    let ramp: Vec<f64> = (0..=20).map(|i| cfg.lambda_at(i as f64 / 20.0)).collect();
    assert!(ramp.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(TrainingConfig::default().lambda_at(0.7), 1.0);
}

#[test]
fn config_validation() {
    let bad = [
        TrainingConfig {
            learning_rate: 0.0,
            ..TrainingConfig::default()
        },
        TrainingConfig {
            batch_size: 1,
            ..TrainingConfig::default()
        },
        TrainingConfig {
            lambda: -1.0,
            ..TrainingConfig::default()
        },
        TrainingConfig {
            momentum: 1.0,
            ..TrainingConfig::default()
        },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(Error::Contract(_))), "{cfg:?}");
    }
    let json = serde_json::to_string(&TrainingConfig::default()).unwrap();
    let back: TrainingConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, TrainingConfig::default());
    let partial: TrainingConfig = serde_json::from_str(r#"{"loss_mode":"paper-likelihood"}"#).unwrap();
    assert_eq!(partial.loss_mode, LossMode::PaperLikelihood);
    assert_eq!(partial.learning_rate, 1e-3);
}

/// A 1-feature linear toy: feature `f = w·x`, prediction `r·f`, domain
/// score `d·f`, squared-error losses. Hand derivatives:
/// `∂L_r/∂w = (rwx − y)·r·x`, `∂L_r/∂r = (rwx − y)·w·x`,
/// `∂L_d/∂w = (dwx − t)·d·x`, `∂L_d/∂d = (dwx − t)·w·x`.
#[test]
fn toy_model_follows_the_three_update_rules() {
    let (x, y, t) = (1.5, 0.4, 1.0);
    let (w, r, d) = (0.8, -0.6, 1.3);
    let (lr, lambda) = (0.05, 0.7);
    let mut p = ParamList::from_tensors(&[Tensor::scalar(w), Tensor::scalar(r), Tensor::scalar(d)]);
    let mut g = Graph::new();
    let (wv, rv, dv) = (g.param(&p.0[0]), g.param(&p.0[1]), g.param(&p.0[2]));
    let f = g.scale(wv, x);
    let pr = g.mul(rv, f).unwrap();
    let e = g.add_scalar(pr, -y);
    let e2 = g.square(e);
    let lr_loss = g.scale(e2, 0.5);
    let fr = g.grad_reverse(f);
    let s = g.mul(dv, fr).unwrap();
    let e = g.add_scalar(s, -t);
    let e2 = g.square(e);
    let ld_loss = g.scale(e2, 0.5);
    let total = assemble_objective(&mut g, lr_loss, ld_loss, lambda).unwrap();
    g.backward(total).unwrap();
    p.accumulate_grads(&g);
    sgd_step(&mut p, lr).unwrap();

    let (er, ed) = (r * w * x - y, d * w * x - t);
    let w1 = w - lr * (er * r * x - lambda * ed * d * x);
    let r1 = r - lr * er * w * x;
    let d1 = d - lr * lambda * ed * w * x;
    let got: Vec<f64> = p.0.iter().map(|q| q.value.item().unwrap()).collect();
    for (a, b) in got.iter().zip([w1, r1, d1]) {
        assert!((a - b).abs() < 1e-12, "{got:?} vs {:?}", [w1, r1, d1]);
    }
}

#[test]
fn assembled_step_matches_explicit_updates() {
    for seed in 0..3 {
        let gap = update_rule_gap(seed).unwrap();
        assert!(gap < 1e-12, "seed {seed}: {gap:e}");
    }
}

#[test]
fn zero_lambda_total_gradient_is_regression_gradient() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let m = DannModel::new(ModelConfig::default(), 3).unwrap();
    let batch = crate::harness::random_dann_batch(&mut r, 4, 11, true);
    let grads = |with_domain: bool| {
        let mut m = m.clone();
        let mut g = Graph::new();
        let l = dann_losses(&mut g, &mut m, &batch, LossMode::GaussianNll, &mut Ctx::train(0)).unwrap();
        let root = if with_domain {
            assemble_objective(&mut g, l.regression, l.domain, 0.0).unwrap()
        } else {
            l.regression
        };
        g.backward(root).unwrap();
        m.net
            .params()
            .iter()
            .map(|p| g.param_grad(p.id()).unwrap().clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(grads(true), grads(false));
}

fn desk_data(seed: u64, source_seasons: usize, shift: ShiftDeltas) -> DomainData {
    let src = SimulatorConfig {
        seed,
        ..SimulatorConfig::default()
    };
    let tgt = src.shifted(&shift);
    let data = DataConfig {
        source_seasons,
        split_seed: seed,
        ..DataConfig::default()
    };
    make_domain_datasets(&src, &tgt, &data).unwrap().normalize().unwrap()
}

fn small_tcn() -> ModelConfig {
    ModelConfig {
        family: Family::Tcn,
        depth: 2,
        hidden: 8,
        disc_hidden: 8,
        ..ModelConfig::default()
    }
}

#[test]
fn zero_lambda_unsupervised_dann_is_source_only_training() {
    let data = desk_data(1, 3, ShiftDeltas::default());
    let cfg = TrainingConfig {
        epochs: 3,
        lambda: 0.0,
        target_supervision: false,
        learning_rate: 1e-2,
        seed: 5,
        ..TrainingConfig::default()
    };
    let mut dann = DannModel::new(small_tcn(), 2).unwrap();
    let mut plain: SequenceModel = dann.net.clone();
    let dann_log = train_dann(&mut dann, &data, &cfg).unwrap();
    let mut plain_log = MetricsLog::default();
    train_regression(
        &mut plain,
        &data.source,
        &data.target_test,
        &data.stats,
        &cfg,
        cfg.epochs,
        Phase::Pretrain,
        &mut plain_log,
    )
    .unwrap();
    for (a, b) in dann.net.params().iter().zip(plain.params()) {
        let same = a
            .value
            .data()
            .iter()
            .zip(b.value.data())
            .all(|(u, v)| u.to_bits() == v.to_bits());
        assert!(same);
    }
    let rmse = |l: &MetricsLog| l.records.iter().map(|r| r.test_rmse.to_bits()).collect::<Vec<_>>();
    assert_eq!(rmse(&dann_log), rmse(&plain_log));
    let src = |l: &MetricsLog| l.records.iter().map(|r| r.source_loss).collect::<Vec<_>>();
    assert_eq!(src(&dann_log), src(&plain_log));
}

/// Logistic regression by full-batch gradient descent; training accuracy.
fn logistic_accuracy(x: &[Vec<f64>], d: &[f64]) -> f64 {
    let dim = x[0].len();
    let (mut w, mut b) = (vec![0.0; dim], 0.0);
    for _ in 0..500 {
        let (mut gw, mut gb) = (vec![0.0; dim], 0.0);
        for (xi, &di) in x.iter().zip(d) {
            let z: f64 = xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let e = 1.0 / (1.0 + (-z).exp()) - di;
            for (g, a) in gw.iter_mut().zip(xi) {
                *g += e * a;
            }
            gb += e;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= 0.1 * g / x.len() as f64;
        }
        b -= 0.1 * gb / x.len() as f64;
    }
    let correct = x
        .iter()
        .zip(d)
        .filter(|(xi, &di)| {
            let z: f64 = xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            (z > 0.0) == (di == 1.0)
        })
        .count();
    correct as f64 / x.len() as f64
}

#[test]
fn discriminator_learns_separable_domains_on_frozen_features() {
    let mut m = DannModel::new(small_tcn(), 4).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let domain_batch = |r: &mut ChaCha8Rng, b: usize| {
        let s = random_tensor(r, &[b, 11, 5]).map(|v| v - 1.0);
        let t = random_tensor(r, &[b, 11, 5]).map(|v| v + 1.0);
        let mut data = s.into_data();
        data.extend(t.into_data());
        Tensor::new(vec![2 * b, 11, 5], data).unwrap()
    };
    let labels = |b: usize| Tensor::new(vec![2 * b, 1], (0..2 * b).map(|i| (i >= b) as u8 as f64).collect()).unwrap();
    let features = |m: &DannModel, x: &Tensor| {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let f = m.net.extract_features(&mut g, xv, &mut Ctx::eval()).unwrap();
        g.value(f).clone()
    };

    // The frozen features are linearly separable (oracle).
    let probe = domain_batch(&mut r, 32);
    let f = features(&m, &probe);
    let rows: Vec<Vec<f64>> = f.data().chunks(f.numel() / 64).map(<[f64]>::to_vec).collect();
    assert!(logistic_accuracy(&rows, labels(32).data()) > 0.9);

    let extractor_before: Vec<Tensor> = m.net.params().iter().map(|p| p.value.clone()).collect();
    for _ in 0..150 {
        let x = domain_batch(&mut r, 8);
        let f = features(&m, &x);
        let mut g = Graph::new();
        let fv = g.constant(f);
        let p = m.discriminate(&mut g, fv, Mode::Train).unwrap();
        let l = bce_loss(&mut g, p, &labels(8)).unwrap();
        g.backward(l).unwrap();
        m.discriminator.accumulate_grads(&g);
        sgd_step(&mut m.discriminator, 0.05).unwrap();
    }
    let x = domain_batch(&mut r, 64);
    let f = features(&m, &x);
    let mut g = Graph::new();
    let fv = g.constant(f);
    let p = m.discriminate(&mut g, fv, Mode::Eval).unwrap();
    let acc = g
        .value(p)
        .data()
        .iter()
        .zip(labels(64).data())
        .filter(|(p, d)| (**p > 0.5) == (**d == 1.0))
        .count() as f64
        / 128.0;
    assert!(acc > 0.9, "{acc}");
    let extractor_after: Vec<Tensor> = m.net.params().iter().map(|p| p.value.clone()).collect();
    assert_eq!(extractor_before, extractor_after);
}

#[test]
fn training_is_deterministic() {
    let data = desk_data(2, 3, ShiftDeltas::default());
    let cfg = TrainingConfig {
        epochs: 3,
        seed: 9,
        ..TrainingConfig::default()
    };
    let run = || {
        let mut m = DannModel::new(small_tcn(), 1).unwrap();
        train_dann(&mut m, &data, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.records, b.records);
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    assert_eq!(a.len(), 3);
    let epochs: Vec<usize> = a.records.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, [1, 2, 3]);
    for r in &a.records {
        assert!(r.source_loss.unwrap().is_finite());
        assert!(r.target_loss.unwrap().is_finite());
        assert!(r.domain_loss.unwrap().is_finite());
        assert!((0.0..=1.0).contains(&r.domain_accuracy.unwrap()));
        assert!(r.test_mae <= r.test_rmse);
    }
}

#[test]
fn finetune_with_zero_epochs_is_pretraining() {
    let data = desk_data(3, 3, ShiftDeltas::default());
    let cfg = TrainingConfig {
        epochs: 2,
        finetune_epochs: 0,
        ..TrainingConfig::default()
    };
    for family in [Family::Mlp, Family::Lstm, Family::Tcn] {
        let config = ModelConfig {
            family,
            hidden: 8,
            depth: 1,
            ..ModelConfig::default()
        };
        let mut a = SequenceModel::new(config.clone(), 0).unwrap();
        let mut b = a.clone();
        let log = pretrain_finetune(&mut a, &data, &cfg).unwrap();
        let mut log_b = MetricsLog::default();
        train_regression(
            &mut b,
            &data.source,
            &data.target_test,
            &data.stats,
            &cfg,
            2,
            Phase::Pretrain,
            &mut log_b,
        )
        .unwrap();
        for (p, q) in a.params().iter().zip(b.params()) {
            assert_eq!(p.value, q.value, "{family}");
        }
        assert_eq!(log.records, log_b.records);

        let cfg2 = TrainingConfig {
            finetune_epochs: 2,
            ..cfg.clone()
        };
        let mut c = SequenceModel::new(config, 0).unwrap();
        let log = pretrain_finetune(&mut c, &data, &cfg2).unwrap();
        let phases: Vec<Phase> = log.records.iter().map(|r| r.phase).collect();
        assert_eq!(
            phases,
            [Phase::Pretrain, Phase::Pretrain, Phase::Finetune, Phase::Finetune]
        );
        let epochs: Vec<usize> = log.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, [1, 2, 3, 4]);
    }
}

#[test]
fn source_loss_decreases_over_fifty_epochs() {
    for seed in 0..5 {
        let data = desk_data(seed, 2, ShiftDeltas::default());
        let cfg = TrainingConfig {
            epochs: 50,
            learning_rate: 1e-2,
            seed,
            ..TrainingConfig::default()
        };
        let config = ModelConfig {
            depth: 1,
            hidden: 8,
            disc_hidden: 8,
            ..small_tcn()
        };
        let mut m = DannModel::new(config, seed).unwrap();
        let log = train_dann(&mut m, &data, &cfg).unwrap();
        let first = log.records[0].source_loss.unwrap();
        let last = log.records[49].source_loss.unwrap();
        assert!(last < first, "seed {seed}: {first} -> {last}");
    }
}

#[test]
fn same_distribution_finetuning_does_not_degrade() {
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let data = desk_data(seed, 4, ShiftDeltas::zero());
        let cfg = TrainingConfig {
            epochs: 15,
            finetune_epochs: 15,
            learning_rate: 1e-2,
            seed,
            ..TrainingConfig::default()
        };
        let config = ModelConfig {
            depth: 1,
            hidden: 8,
            ..small_tcn()
        };
        let mut m = SequenceModel::new(config, seed).unwrap();
        let log = pretrain_finetune(&mut m, &data, &cfg).unwrap();
        ratios.push(log.records[29].test_rmse / log.records[14].test_rmse);
    }
    ratios.sort_by(f64::total_cmp);
    assert!(ratios[2] <= 1.05, "{ratios:?}");
}

#[test]
fn non_finite_data_aborts_with_location() {
    let mut data = desk_data(4, 2, ShiftDeltas::default());
    data.source.y.data_mut().fill(f64::NAN);
    let cfg = TrainingConfig {
        epochs: 2,
        ..TrainingConfig::default()
    };
    let mut m = DannModel::new(small_tcn(), 0).unwrap();
    match train_dann(&mut m, &data, &cfg) {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("epoch 1 step 0"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let mut s = m.net.clone();
    match train_direct(
        &mut s,
        &DomainData {
            target_train: data.source.clone(),
            ..data.clone()
        },
        &cfg,
    ) {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("direct epoch 1"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn batch_size_one_rejected() {
    let data = desk_data(5, 2, ShiftDeltas::default());
    let cfg = TrainingConfig {
        batch_size: 1,
        ..TrainingConfig::default()
    };
    let mut m = DannModel::new(small_tcn(), 0).unwrap();
    assert!(matches!(train_dann(&mut m, &data, &cfg), Err(Error::Contract(_))));
}

#[test]
fn metrics_log_round_trips() {
    let data = desk_data(6, 2, ShiftDeltas::default());
    let cfg = TrainingConfig {
        epochs: 2,
        ..TrainingConfig::default()
    };
    let mut m = DannModel::new(small_tcn(), 0).unwrap();
    let log = train_dann(&mut m, &data, &cfg).unwrap();
    let back = MetricsLog::from_jsonl(&log.to_jsonl().unwrap()).unwrap();
    assert_eq!(back.records, log.records);
    let csv = log.to_csv();
    assert_eq!(csv.lines().next().unwrap(), CURVE_HEADER);
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn evaluation_reports_label_units() {
    let data = desk_data(7, 2, ShiftDeltas::default());
    let m = SequenceModel::new(small_tcn(), 0).unwrap();
    let report = evaluate(&m, &data.target_test, &data.stats).unwrap();
    let (mu, _, y) = predict_dataset(&m, &data.target_test, &data.stats).unwrap();
    let n = y.numel() as f64;
    let mae = mu.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    assert!((report.mae - mae).abs() < 1e-12);
    assert!(report.mae <= report.rmse);
    assert_eq!(report.windows, data.target_test.len());
}
