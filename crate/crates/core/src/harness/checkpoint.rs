//! Versioned JSON checkpoints with decimal-text values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Parameterized, Tensor};
use crate::data::NormalizationStats;
use crate::error::{Error, Result};
use crate::model::{DannModel, ModelConfig, SequenceModel};
use crate::training::TrainingConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// 17 significant digits: enough for any f64 to parse back to itself.
fn encode(v: f64) -> String {
    format!("{v:.16e}")
}

fn decode(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Checkpoint(format!("{what}: bad number '{s}'")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<String>,
}

impl ParamBlock {
    fn new(name: impl Into<String>, shape: &[usize], values: &[f64]) -> Self {
        ParamBlock {
            name: name.into(),
            shape: shape.to_vec(),
            values: values.iter().map(|&v| encode(v)).collect(),
        }
    }

    fn decode(&self) -> Result<Vec<f64>> {
        let n: usize = self.shape.iter().product();
        if n != self.values.len() {
            return Err(Error::Checkpoint(format!(
                "{}: shape {:?} but {} values",
                self.name,
                self.shape,
                self.values.len()
            )));
        }
        self.values.iter().map(|s| decode(s, &self.name)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsText {
    pub feature_mean: Vec<String>,
    pub feature_std: Vec<String>,
    pub label_mean: String,
    pub label_std: String,
}

impl From<&NormalizationStats> for StatsText {
    fn from(s: &NormalizationStats) -> Self {
        StatsText {
            feature_mean: s.feature_mean.iter().map(|&v| encode(v)).collect(),
            feature_std: s.feature_std.iter().map(|&v| encode(v)).collect(),
            label_mean: encode(s.label_mean),
            label_std: encode(s.label_std),
        }
    }
}

impl StatsText {
    fn decode(&self) -> Result<NormalizationStats> {
        let list = |v: &[String]| v.iter().map(|s| decode(s, "stats")).collect::<Result<Vec<_>>>();
        Ok(NormalizationStats {
            feature_mean: list(&self.feature_mean)?,
            feature_std: list(&self.feature_std)?,
            label_mean: decode(&self.label_mean, "stats")?,
            label_std: decode(&self.label_std, "stats")?,
        })
    }
}

/// Everything needed to rebuild a trained model and its input scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelConfig,
    pub params: Vec<ParamBlock>,
    /// Non-trainable state (discriminator batch-norm running statistics).
    pub buffers: Vec<ParamBlock>,
    pub stats: StatsText,
    /// SHA-256 of the training configuration's JSON.
    pub training_config_hash: String,
    pub seed: u64,
}

pub fn config_hash(cfg: &TrainingConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

fn blocks<M: Parameterized>(m: &M) -> Vec<ParamBlock> {
    m.named_params()
        .into_iter()
        .map(|(name, p)| ParamBlock::new(name, p.value.shape(), p.value.data()))
        .collect()
}

fn restore<M: Parameterized>(m: &mut M, blocks: &[ParamBlock]) -> Result<()> {
    let mut params = m.named_params_mut();
    let expected: Vec<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
    let found: Vec<&str> = blocks.iter().map(|b| b.name.as_str()).collect();
    if expected != found {
        return Err(Error::Checkpoint(format!(
            "parameter names do not match the architecture: expected {} blocks, found {}",
            expected.len(),
            found.len()
        )));
    }
    for ((name, p), b) in params.iter_mut().zip(blocks) {
        if p.value.shape() != b.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{name}: architecture shape {:?}, checkpoint shape {:?}",
                p.value.shape(),
                b.shape
            )));
        }
        p.value = Tensor::new(b.shape.clone(), b.decode()?)?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_model(
        model: &SequenceModel,
        stats: &NormalizationStats,
        training: &TrainingConfig,
        seed: u64,
    ) -> Result<Self> {
        Ok(Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: model.config.clone(),
            params: blocks(model),
            buffers: Vec::new(),
            stats: stats.into(),
            training_config_hash: config_hash(training)?,
            seed,
        })
    }

    /// Keeps the discriminator and its batch-norm buffers as well.
    pub fn from_dann(
        model: &DannModel,
        stats: &NormalizationStats,
        training: &TrainingConfig,
        seed: u64,
    ) -> Result<Self> {
        let bn = &model.discriminator.bn;
        let n = bn.running_mean.len();
        Ok(Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: model.config().clone(),
            params: blocks(model),
            buffers: vec![
                ParamBlock::new("discriminator.bn.running_mean", &[n], &bn.running_mean),
                ParamBlock::new("discriminator.bn.running_var", &[n], &bn.running_var),
            ],
            stats: stats.into(),
            training_config_hash: config_hash(training)?,
            seed,
        })
    }

    pub fn has_discriminator(&self) -> bool {
        self.params.iter().any(|b| b.name.starts_with("discriminator."))
    }

    pub fn stats(&self) -> Result<NormalizationStats> {
        self.stats.decode()
    }

    /// The inference model; any discriminator blocks are skipped.
    pub fn sequence_model(&self) -> Result<SequenceModel> {
        self.check_version()?;
        let mut m = SequenceModel::new(self.model.clone(), 0)?;
        let own: Vec<ParamBlock> = self
            .params
            .iter()
            .filter(|b| !b.name.starts_with("discriminator."))
            .cloned()
            .collect();
        restore(&mut m, &own)?;
        Ok(m)
    }

    pub fn dann_model(&self) -> Result<DannModel> {
        self.check_version()?;
        if !self.has_discriminator() {
            return Err(Error::Checkpoint("checkpoint has no discriminator".into()));
        }
        let mut m = DannModel::new(self.model.clone(), 0)?;
        restore(&mut m, &self.params)?;
        let buffer = |name: &str| -> Result<Vec<f64>> {
            self.buffers
                .iter()
                .find(|b| b.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing buffer {name}")))?
                .decode()
        };
        let (mean, var) = (
            buffer("discriminator.bn.running_mean")?,
            buffer("discriminator.bn.running_var")?,
        );
        let bn = &mut m.discriminator.bn;
        if mean.len() != bn.running_mean.len() || var.len() != bn.running_var.len() {
            return Err(Error::Checkpoint("batch-norm buffer size mismatch".into()));
        }
        bn.running_mean = mean;
        bn.running_var = var;
        Ok(m)
    }

    fn check_version(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        c.check_version()?;
        c.model.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
