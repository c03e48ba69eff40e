use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    assemble_objective, dann_losses, evaluate, regression_loss, DannBatch, MetricsLog, MetricsRecord, Phase, Sgd,
    TrainingConfig,
};
use crate::autodiff::{Graph, Parameterized};
use crate::data::{Dataset, DomainData, NormalizationStats};
use crate::error::{Error, Result};
use crate::model::{DannModel, SequenceModel};
use crate::nn::Ctx;

const SHUFFLE_STREAM: u64 = 0;
const TARGET_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Shuffled minibatches; a trailing batch of one is dropped so batch
/// statistics always see at least two samples.
fn minibatches(n: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch)
        .filter(|c| c.len() >= 2 || n == 1)
        .map(<[usize]>::to_vec)
        .collect()
}

fn non_finite(phase: Phase, epoch: usize, step: usize, v: f64) -> Error {
    Error::NonFinite(format!("{phase} epoch {epoch} step {step}: loss {v}"))
}

/// Tags numeric failures with where they happened.
fn tagged(at: String) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("{at}: {msg}")),
        Error::Domain { op, detail } => Error::Domain {
            op,
            detail: format!("{at}: {detail}"),
        },
        e => e,
    }
}

fn at_step(phase: Phase, epoch: usize, step: usize) -> impl Fn(Error) -> Error {
    tagged(format!("{phase} epoch {epoch} step {step}"))
}

fn at_eval(phase: Phase, epoch: usize) -> impl Fn(Error) -> Error {
    tagged(format!("{phase} epoch {epoch} evaluation"))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Regression-only training of `model` on `train`, evaluating on `test`
/// after every epoch and appending to `log`.
#[allow(clippy::too_many_arguments)]
pub fn train_regression(
    model: &mut SequenceModel,
    train: &Dataset,
    test: &Dataset,
    stats: &NormalizationStats,
    cfg: &TrainingConfig,
    epochs: usize,
    phase: Phase,
    log: &mut MetricsLog,
) -> Result<()> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::contract("empty dataset"));
    }
    let mut shuffle = stream(cfg.seed, SHUFFLE_STREAM);
    let mut ctx = Ctx::train(stream(cfg.seed, DROPOUT_STREAM).random());
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum)?;
    model.zero_grads();
    for _ in 0..epochs {
        let epoch = log.next_epoch();
        let started = Instant::now();
        let mut losses = Vec::new();
        for (step, idx) in minibatches(train.len(), cfg.batch_size, &mut shuffle)
            .iter()
            .enumerate()
        {
            let (x, y) = train.gather(idx);
            let mut g = Graph::new();
            let xv = g.constant(x);
            let yv = g.constant(y);
            let tag = at_step(phase, epoch, step);
            let pred = model.forward(&mut g, xv, &mut ctx).map_err(&tag)?;
            let loss = regression_loss(&mut g, cfg.loss_mode, pred, yv).map_err(&tag)?;
            let v = g.value(loss).item()?;
            if !v.is_finite() {
                return Err(non_finite(phase, epoch, step, v));
            }
            g.backward(loss).map_err(&tag)?;
            model.accumulate_grads(&g);
            opt.step(model).map_err(&tag)?;
            losses.push(v);
        }
        let report = evaluate(model, test, stats).map_err(at_eval(phase, epoch))?;
        let loss = Some(mean(&losses));
        let (source_loss, target_loss) = match phase {
            Phase::Pretrain => (loss, None),
            _ => (None, loss),
        };
        log.push(
            MetricsRecord {
                epoch,
                phase,
                source_loss,
                target_loss,
                domain_loss: None,
                domain_accuracy: None,
                lambda: None,
                test_mae: report.mae,
                test_rmse: report.rmse,
                test_nll: report.nll,
            },
            started.elapsed().as_secs_f64(),
        );
    }
    Ok(())
}

/// Trains only on the labelled target windows.
pub fn train_direct(model: &mut SequenceModel, data: &DomainData, cfg: &TrainingConfig) -> Result<MetricsLog> {
    let mut log = MetricsLog::default();
    train_regression(
        model,
        &data.target_train,
        &data.target_test,
        &data.stats,
        cfg,
        cfg.epochs,
        Phase::Direct,
        &mut log,
    )?;
    Ok(log)
}

/// Source pretraining for `cfg.epochs`, then `cfg.finetune_epochs` on the
/// target-train windows; both phases share one log.
pub fn pretrain_finetune(model: &mut SequenceModel, data: &DomainData, cfg: &TrainingConfig) -> Result<MetricsLog> {
    let mut log = MetricsLog::default();
    train_regression(
        model,
        &data.source,
        &data.target_test,
        &data.stats,
        cfg,
        cfg.epochs,
        Phase::Pretrain,
        &mut log,
    )?;
    train_regression(
        model,
        &data.target_train,
        &data.target_test,
        &data.stats,
        cfg,
        cfg.finetune_epochs,
        Phase::Finetune,
        &mut log,
    )?;
    Ok(log)
}

/// Adversarial training. Each step pairs a shuffled source minibatch with
/// an equally sized target-train minibatch drawn with replacement, runs the
/// extractor once on both, and takes one SGD step on
/// `L_r(source) [+ L_r(target)] + λ·BCE(domain)`.
pub fn train_dann(model: &mut DannModel, data: &DomainData, cfg: &TrainingConfig) -> Result<MetricsLog> {
    cfg.validate()?;
    if data.source.is_empty() || data.target_train.is_empty() || data.target_test.is_empty() {
        return Err(Error::contract("empty dataset"));
    }
    let mut shuffle = stream(cfg.seed, SHUFFLE_STREAM);
    let mut target_rng = stream(cfg.seed, TARGET_STREAM);
    let mut ctx = Ctx::train(stream(cfg.seed, DROPOUT_STREAM).random());
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum)?;
    let mut log = MetricsLog::default();
    let n_target = data.target_train.len();
    let steps_per_epoch = minibatches(data.source.len(), cfg.batch_size, &mut shuffle.clone()).len();
    let total_steps = (steps_per_epoch * cfg.epochs).max(1) as f64;
    model.zero_grads();

    for e in 0..cfg.epochs {
        let epoch = log.next_epoch();
        let started = Instant::now();
        let (mut src, mut tgt, mut dom, mut correct, mut seen) = (vec![], vec![], vec![], 0usize, 0usize);
        let mut lambda = cfg.lambda_at(0.0);
        for (step, idx) in minibatches(data.source.len(), cfg.batch_size, &mut shuffle)
            .iter()
            .enumerate()
        {
            let b = idx.len();
            let t_idx: Vec<usize> = (0..b).map(|_| target_rng.random_range(0..n_target)).collect();
            let (source_x, source_y) = data.source.gather(idx);
            let (target_x, target_y) = data.target_train.gather(&t_idx);
            let batch = DannBatch {
                source_x,
                source_y,
                target_x,
                target_y: cfg.target_supervision.then_some(target_y),
            };
            lambda = cfg.lambda_at((e * steps_per_epoch + step) as f64 / total_steps);

            let mut g = Graph::new();
            let tag = at_step(Phase::Dann, epoch, step);
            let l = dann_losses(&mut g, model, &batch, cfg.loss_mode, &mut ctx).map_err(&tag)?;
            let total = assemble_objective(&mut g, l.regression, l.domain, lambda).map_err(&tag)?;
            let v = g.value(total).item()?;
            if !v.is_finite() {
                return Err(non_finite(Phase::Dann, epoch, step, v));
            }
            g.backward(total).map_err(&tag)?;
            model.accumulate_grads(&g);
            opt.step(model).map_err(&tag)?;

            src.push(g.value(l.source).item()?);
            if let Some(t) = l.target {
                tgt.push(g.value(t).item()?);
            }
            dom.push(g.value(l.domain).item()?);
            correct += g
                .value(l.domain_prob)
                .data()
                .iter()
                .zip(g.value(l.domain_labels).data())
                .filter(|(p, d)| (**p > 0.5) == (**d == 1.0))
                .count();
            seen += 2 * b;
        }
        let report = evaluate(&model.net, &data.target_test, &data.stats).map_err(at_eval(Phase::Dann, epoch))?;
        log.push(
            MetricsRecord {
                epoch,
                phase: Phase::Dann,
                source_loss: Some(mean(&src)),
                target_loss: (!tgt.is_empty()).then(|| mean(&tgt)),
                domain_loss: Some(mean(&dom)),
                domain_accuracy: Some(correct as f64 / seen as f64),
                lambda: Some(lambda),
                test_mae: report.mae,
                test_rmse: report.rmse,
                test_nll: report.nll,
            },
            started.elapsed().as_secs_f64(),
        );
    }
    Ok(log)
}
