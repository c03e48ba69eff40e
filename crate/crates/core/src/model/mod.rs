//! The assembled architecture: a sequence feature extractor, a per-step
//! Gaussian regression head, and a domain discriminator behind a gradient
//! reversal layer.

mod config;
mod discriminator;
mod regressor;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{prefixed, Graph, Param, Parameterized, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Ctx, Lstm, Mlp, Mode, Tcn};

pub use config::{Family, ModelConfig, SigmaLink};
pub use discriminator::DomainDiscriminator;
pub use regressor::{GaussianPrediction, GaussianRegressor};

/// Feature extractor backbone. Every variant maps `[B, T, F]` inputs to
/// channel-major features `[B, hidden, T]`.
#[derive(Clone, Debug)]
pub enum Backbone {
    /// Per-step dense trunk (`F → hidden → hidden`, ReLU after each layer).
    Mlp(Mlp),
    Lstm(Lstm),
    Tcn(Tcn),
}

impl Backbone {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let (f, h) = (cfg.input_features, cfg.hidden);
        match cfg.family {
            Family::Mlp => Backbone::Mlp(Mlp::with_sizes(&[f, h, h], true, rng)),
            Family::Lstm => Backbone::Lstm(Lstm::new(f, h, cfg.depth, rng)),
            Family::Tcn => Backbone::Tcn(Tcn::new(f, h, cfg.kernel, &cfg.dilations(), cfg.dropout, rng)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (b, t, f) = (s[0], s[1], s[2]);
        match self {
            Backbone::Mlp(mlp) => {
                let flat = g.reshape(x, &[b * t, f])?;
                let h = mlp.forward(g, flat)?;
                let h = g.reshape(h, &[b, t, mlp.output_size()])?;
                g.transpose(h, 1, 2)
            }
            Backbone::Lstm(lstm) => {
                let h = lstm.forward(g, x)?;
                g.transpose(h, 1, 2)
            }
            Backbone::Tcn(tcn) => {
                let xc = g.transpose(x, 1, 2)?;
                tcn.forward(g, xc, ctx)
            }
        }
    }
}

impl Parameterized for Backbone {
    fn named_params(&self) -> Vec<(String, &Param)> {
        match self {
            Backbone::Mlp(m) => m.named_params(),
            Backbone::Lstm(m) => m.named_params(),
            Backbone::Tcn(m) => m.named_params(),
        }
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        match self {
            Backbone::Mlp(m) => m.named_params_mut(),
            Backbone::Lstm(m) => m.named_params_mut(),
            Backbone::Tcn(m) => m.named_params_mut(),
        }
    }
}

/// Extractor plus regression head: the baseline model, and what remains of
/// a DANN model once the discriminator is stripped.
#[derive(Clone, Debug)]
pub struct SequenceModel {
    pub config: ModelConfig,
    pub extractor: Backbone,
    pub regressor: GaussianRegressor,
}

impl SequenceModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extractor = Backbone::new(&config, &mut rng);
        let regressor = GaussianRegressor::new(config.hidden, config.sigma_link, &mut rng);
        Ok(SequenceModel {
            config,
            extractor,
            regressor,
        })
    }

    /// `x: [B, T, F] → [B, hidden, T]`
    pub fn extract_features(&self, g: &mut Graph, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let s = g.shape(x);
        let want = [self.config.seq_len, self.config.input_features];
        if s.len() != 3 || s[1..] != want {
            return Err(Error::shape("extract_features", s, &want));
        }
        self.extractor.forward(g, x, ctx)
    }

    pub fn regress(&self, g: &mut Graph, features: Var) -> Result<GaussianPrediction> {
        self.regressor.forward(g, features)
    }

    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut Ctx) -> Result<GaussianPrediction> {
        let f = self.extract_features(g, x, ctx)?;
        self.regress(g, f)
    }

    /// Eval-mode `(μ, σ)` for a `[B, T, F]` input.
    pub fn predict(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let p = self.forward(&mut g, xv, &mut Ctx::eval())?;
        Ok((g.value(p.mu).clone(), g.value(p.sigma).clone()))
    }
}

impl Parameterized for SequenceModel {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = prefixed("extractor", self.extractor.named_params());
        out.extend(prefixed("regressor", self.regressor.named_params()));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = prefixed("extractor", self.extractor.named_params_mut());
        out.extend(prefixed("regressor", self.regressor.named_params_mut()));
        out
    }
}

/// Output of one training-mode pass through all three parts.
#[derive(Clone, Copy, Debug)]
pub struct TrainOutput {
    pub features: Var,
    pub prediction: GaussianPrediction,
    pub domain_prob: Var,
}

#[derive(Clone, Debug)]
pub struct DannModel {
    pub net: SequenceModel,
    pub discriminator: DomainDiscriminator,
}

impl DannModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.family == Family::Mlp {
            return Err(Error::contract("adversarial training needs an lstm or tcn backbone"));
        }
        let net = SequenceModel::new(config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD15C);
        let discriminator =
            DomainDiscriminator::new(net.config.hidden * net.config.seq_len, net.config.disc_hidden, &mut rng);
        Ok(DannModel { net, discriminator })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    /// Probability of domain label 1, computed behind the gradient reversal.
    pub fn discriminate(&mut self, g: &mut Graph, features: Var, mode: Mode) -> Result<Var> {
        self.discriminator.forward(g, features, mode)
    }

    /// One shared feature computation feeding both heads.
    pub fn forward_train(&mut self, g: &mut Graph, x: Var, ctx: &mut Ctx) -> Result<TrainOutput> {
        let features = self.net.extract_features(g, x, ctx)?;
        let prediction = self.net.regress(g, features)?;
        let domain_prob = self.discriminator.forward(g, features, ctx.mode)?;
        Ok(TrainOutput {
            features,
            prediction,
            domain_prob,
        })
    }

    pub fn strip_discriminator(self) -> SequenceModel {
        self.net
    }

    pub fn extractor_param_count(&self) -> usize {
        self.net.extractor.param_count()
    }
}

impl Parameterized for DannModel {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = self.net.named_params();
        out.extend(prefixed("discriminator", self.discriminator.named_params()));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = self.net.named_params_mut();
        out.extend(prefixed("discriminator", self.discriminator.named_params_mut()));
        out
    }
}
