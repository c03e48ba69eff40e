//! The component-by-component gradient check behind `gradcheck`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checks::{random_dann_batch, random_tensor};
use crate::autodiff::{
    check_gradients, FdOptions, FdReport, FdWorst, Graph, Param, ParamList, Parameterized, Tensor, Var,
};
use crate::error::Result;
use crate::model::{DannModel, DomainDiscriminator, Family, GaussianPrediction, GaussianRegressor, SigmaLink};
use crate::nn::{BatchNorm1d, CausalConv1d, Ctx, Dense, Lstm, LstmLayer, Mlp, Mode, PointwiseConv, Tcn, TcnBlock};
use crate::training::{
    bce_loss, check_dann_gradients, gaussian_nll, gaussian_paper_loss, gradcheck_config, LossMode, GRADCHECK_BATCH,
};

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const GRADCHECK_STEP: f64 = 1e-6;

type CaseFn = dyn Fn(u64) -> Result<FdReport> + Send + Sync;

/// One named finite-difference check, run from a seed.
pub struct GradcheckCase {
    pub name: String,
    run: Box<CaseFn>,
}

impl GradcheckCase {
    pub fn new(name: impl Into<String>, run: impl Fn(u64) -> Result<FdReport> + Send + Sync + 'static) -> Self {
        GradcheckCase {
            name: name.into(),
            run: Box::new(run),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckRow {
    pub component: String,
    pub max_rel_error: f64,
    pub entries: usize,
    pub worst: Option<FdWorst>,
    /// Set when the check itself could not run.
    pub error: Option<String>,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub rows: Vec<GradcheckRow>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(GradcheckRow::passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.component.as_str())
            .collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.component.len()).max().unwrap_or(9).max(9);
        let mut out = format!(
            "{:<width$}  {:>12}  {:>8}  status\n",
            "component", "max rel err", "entries"
        );
        for r in &self.rows {
            let status = match (&r.error, r.passed()) {
                (Some(e), _) => format!("ERROR {e}"),
                (None, true) => "pass".to_string(),
                (None, false) => match &r.worst {
                    Some(w) => format!(
                        "FAIL at {}[{}]: analytic {:e}, numeric {:e}",
                        w.param, w.index, w.analytic, w.numeric
                    ),
                    None => "FAIL".to_string(),
                },
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.3e}  {:>8}  {status}",
                r.component, r.max_rel_error, r.entries
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,max_rel_error,entries,passed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{},{}",
                r.component,
                r.max_rel_error,
                r.entries,
                r.passed()
            );
        }
        out
    }
}

pub fn run_gradcheck(cases: &[GradcheckCase], seed: u64) -> GradcheckReport {
    let rows = cases
        .iter()
        .map(|case| match (case.run)(seed) {
            Ok(rep) => GradcheckRow {
                component: case.name.clone(),
                max_rel_error: rep.max_rel_error,
                entries: rep.entries_checked,
                worst: rep.worst,
                error: None,
            },
            Err(e) => GradcheckRow {
                component: case.name.clone(),
                max_rel_error: f64::INFINITY,
                entries: 0,
                worst: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    GradcheckReport { rows }
}

fn opts() -> FdOptions {
    FdOptions {
        step: GRADCHECK_STEP,
        ..FdOptions::default()
    }
}

/// `Σ y ⊙ R` with a fixed random `R`, so that no output is left out.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let proj = g.constant(random_tensor(&mut r, g.shape(y)));
    let p = g.mul(y, proj)?;
    Ok(g.sum(p))
}

/// Zero biases put ReLU inputs exactly on the kink wherever causal padding
/// feeds zeros; the check points use random biases instead.
fn randomize_biases<M: Parameterized + ?Sized>(m: &mut M, r: &mut ChaCha8Rng) {
    for (name, p) in m.named_params_mut() {
        if name.ends_with("bias") || name.ends_with("beta") || name.ends_with("b_ih") {
            p.value = random_tensor(r, p.value.shape());
        }
    }
}

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(salt))
}

fn layer_case<M: Parameterized + 'static>(
    name: &str,
    build: impl Fn(&mut ChaCha8Rng) -> (M, Tensor) + Send + Sync + 'static,
    forward: impl Fn(&mut M, &mut Graph, Var) -> Result<Var> + Send + Sync + 'static,
) -> GradcheckCase {
    let salt = name
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    GradcheckCase::new(name, move |seed| {
        let mut r = rng(seed, salt);
        let (mut m, x) = build(&mut r);
        randomize_biases(&mut m, &mut r);
        check_gradients(
            &mut m,
            |g, m| {
                let xv = g.constant(x.clone());
                let y = forward(m, g, xv)?;
                project(g, y, seed)
            },
            &opts(),
        )
    })
}

fn positive(r: &mut ChaCha8Rng, shape: &[usize], lo: f64) -> Tensor {
    random_tensor(r, shape).map(|v| lo + v.abs())
}

/// Elementwise primitives composed into one scalar.
fn elementwise_case() -> GradcheckCase {
    GradcheckCase::new("elementwise ops", |seed| {
        let mut r = rng(seed, 1);
        let mut p = ParamList::from_tensors(&[random_tensor(&mut r, &[3, 4]), positive(&mut r, &[3, 4], 0.5)]);
        check_gradients(
            &mut p,
            |g, m| {
                let (a, b) = (g.param(&m.0[0]), g.param(&m.0[1]));
                let s = g.add(a, b)?;
                let d = g.sub(a, b)?;
                let q = g.div(s, b)?;
                let e = g.exp(d);
                let l = g.log(b)?;
                let t = g.tanh(q);
                let sg = g.sigmoid(a);
                let sp = g.softplus(d);
                let sq = g.square(t);
                let re = g.relu(a);
                let cl = g.clamp(q, -0.8, 0.8);
                let mut acc = g.mul(e, l)?;
                for v in [sg, sp, sq, re, cl] {
                    acc = g.add(acc, v)?;
                }
                let acc = g.scale(acc, 0.7);
                let acc = g.add_scalar(acc, 0.3);
                project(g, acc, seed)
            },
            &opts(),
        )
    })
}

/// Matmul, bias, concatenation, slicing, reshaping, transposition,
/// padding and reductions.
fn structural_case() -> GradcheckCase {
    GradcheckCase::new("structural ops", |seed| {
        let mut r = rng(seed, 2);
        let mut p = ParamList::from_tensors(&[
            random_tensor(&mut r, &[2, 3]),
            random_tensor(&mut r, &[3, 4]),
            random_tensor(&mut r, &[4]),
        ]);
        check_gradients(
            &mut p,
            |g, m| {
                let (a, w, b) = (g.param(&m.0[0]), g.param(&m.0[1]), g.param(&m.0[2]));
                let y = g.matmul(a, w)?;
                let y = g.add_bias(y, b)?;
                let c = g.concat(&[y, y], 0)?;
                let s = g.slice(c, 1, 1, 3)?;
                let s = g.reshape(s, &[2, 2, 3])?;
                let t = g.transpose(s, 1, 2)?;
                let padded = g.pad_left(t, 2);
                let total = project(g, padded, seed)?;
                let m2 = g.mean(y);
                let s2 = g.sum(w);
                let extra = g.mul(m2, s2)?;
                g.add(total, extra)
            },
            &opts(),
        )
    })
}

fn prediction_params(r: &mut ChaCha8Rng) -> ParamList {
    ParamList::from_tensors(&[random_tensor(r, &[3, 5]), positive(r, &[3, 5], 0.3)])
}

fn gaussian_case(name: &str, mode: LossMode, salt: u64) -> GradcheckCase {
    GradcheckCase::new(name, move |seed| {
        let mut r = rng(seed, salt);
        let mut p = prediction_params(&mut r);
        let y = random_tensor(&mut r, &[3, 5]);
        check_gradients(
            &mut p,
            |g, m| {
                let pred = GaussianPrediction {
                    mu: g.param(&m.0[0]),
                    sigma: g.param(&m.0[1]),
                };
                let yv = g.constant(y.clone());
                match mode {
                    LossMode::GaussianNll => gaussian_nll(g, pred, yv),
                    LossMode::PaperLikelihood => gaussian_paper_loss(g, pred, yv),
                }
            },
            &opts(),
        )
    })
}

fn bce_case() -> GradcheckCase {
    GradcheckCase::new("bce loss", |seed| {
        let mut r = rng(seed, 3);
        let p = random_tensor(&mut r, &[8, 1]).map(|v| 0.5 + 0.45 * v);
        let d = Tensor::new(vec![8, 1], (0..8).map(|i| (i % 2) as f64).collect())?;
        let mut params = ParamList(vec![Param::new(p)]);
        check_gradients(
            &mut params,
            |g, m| {
                let pv = g.param(&m.0[0]);
                bce_loss(g, pv, &d)
            },
            &opts(),
        )
    })
}

fn dann_case(family: Family) -> GradcheckCase {
    let name = format!("dann objective ({family})");
    GradcheckCase::new(name, move |seed| {
        let cfg = gradcheck_config(family);
        let mut m = DannModel::new(cfg.clone(), seed)?;
        let mut r = rng(seed, 4);
        randomize_biases(&mut m, &mut r);
        let batch = random_dann_batch(&mut r, GRADCHECK_BATCH, cfg.seq_len, true);
        check_dann_gradients(&mut m, &batch, 1.0, LossMode::GaussianNll, &opts())
    })
}

/// Every layer type, the primitive groups, both Gaussian losses, BCE and
/// the assembled adversarial objective for both sequence backbones.
pub fn standard_cases() -> Vec<GradcheckCase> {
    vec![
        elementwise_case(),
        structural_case(),
        layer_case(
            "dense",
            |r| (Dense::new(4, 3, r), random_tensor(r, &[3, 4])),
            |m, g, x| m.forward(g, x),
        ),
        layer_case(
            "causal conv (weight norm)",
            |r| (CausalConv1d::new(3, 2, 2, 2, r), random_tensor(r, &[2, 3, 6])),
            |m, g, x| m.forward(g, x),
        ),
        layer_case(
            "pointwise conv",
            |r| (PointwiseConv::new(3, 4, r), random_tensor(r, &[2, 3, 5])),
            |m, g, x| m.forward(g, x),
        ),
        layer_case(
            "batch norm (train)",
            |r| (BatchNorm1d::new(3), random_tensor(r, &[5, 3])),
            |m, g, x| m.forward(g, x, Mode::Train),
        ),
        layer_case(
            "tcn block",
            |r| (TcnBlock::new(3, 4, 2, 2, 0.0, r), random_tensor(r, &[2, 3, 7])),
            |m, g, x| m.forward(g, x, &mut Ctx::eval()),
        ),
        layer_case(
            "tcn stack",
            |r| (Tcn::new(3, 3, 2, &[1, 2], 0.0, r), random_tensor(r, &[2, 3, 6])),
            |m, g, x| m.forward(g, x, &mut Ctx::eval()),
        ),
        layer_case(
            "lstm layer",
            |r| (LstmLayer::new(3, 3, r), random_tensor(r, &[2, 4, 3])),
            |m, g, x| m.forward(g, x),
        ),
        layer_case(
            "lstm stack",
            |r| (Lstm::new(3, 3, 2, r), random_tensor(r, &[2, 4, 3])),
            |m, g, x| m.forward(g, x),
        ),
        layer_case(
            "mlp",
            |r| (Mlp::new(4, 5, 2, r), random_tensor(r, &[3, 4])),
            |m, g, x| m.forward(g, x),
        ),
        layer_case(
            "regressor (softplus)",
            |r| {
                (
                    GaussianRegressor::new(3, SigmaLink::SoftplusEpsilon, r),
                    random_tensor(r, &[2, 3, 4]),
                )
            },
            regress,
        ),
        layer_case(
            "regressor (strict relu)",
            |r| {
                (
                    GaussianRegressor::new(3, SigmaLink::PaperStrictRelu, r),
                    random_tensor(r, &[2, 3, 4]),
                )
            },
            regress,
        ),
        discriminator_case(),
        gaussian_case("gaussian nll", LossMode::GaussianNll, 5),
        gaussian_case("gaussian likelihood", LossMode::PaperLikelihood, 6),
        bce_case(),
        dann_case(Family::Tcn),
        dann_case(Family::Lstm),
    ]
}

fn regress(m: &mut GaussianRegressor, g: &mut Graph, x: Var) -> Result<Var> {
    let p = m.forward(g, x)?;
    let both = g.concat(&[p.mu, p.sigma], 0)?;
    Ok(both)
}

fn discriminator_case() -> GradcheckCase {
    GradcheckCase::new("discriminator", |seed| {
        let mut r = rng(seed, 7);
        let mut d = DomainDiscriminator::new(12, 4, &mut r);
        randomize_biases(&mut d, &mut r);
        let x = random_tensor(&mut r, &[6, 3, 4]);
        let opts = FdOptions {
            invariant_params: vec!["fc1.bias".into()],
            ..opts()
        };
        // Without the reversal so that the input-side sign does not matter;
        // the parameters are all downstream of it anyway.
        d.reverse_gradient = false;
        check_gradients(
            &mut d,
            |g, m| {
                let xv = g.constant(x.clone());
                let y = m.forward(g, xv, Mode::Train)?;
                project(g, y, seed)
            },
            &opts,
        )
    })
}
