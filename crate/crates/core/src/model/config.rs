use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tcn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mlp,
    Lstm,
    Tcn,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Mlp => "mlp",
            Family::Lstm => "lstm",
            Family::Tcn => "tcn",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Family::Mlp),
            "lstm" => Ok(Family::Lstm),
            "tcn" => Ok(Family::Tcn),
            _ => Err(Error::contract(format!("unknown backbone '{s}'"))),
        }
    }
}

/// How the raw head outputs become `(μ, σ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaLink {
    /// `μ = raw`, `σ = softplus(raw) + 1e-6`.
    #[default]
    SoftplusEpsilon,
    /// `μ = relu(raw)`, `σ = relu(raw) + 1e-6`.
    PaperStrictRelu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    /// Residual blocks (TCN) or stacked layers (LSTM); ignored for MLP.
    pub depth: usize,
    pub input_features: usize,
    pub hidden: usize,
    pub seq_len: usize,
    pub kernel: usize,
    /// Per-block dilations; empty means `1, 2, 4, …`.
    pub dilations: Vec<usize>,
    pub dropout: f64,
    pub sigma_link: SigmaLink,
    pub disc_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: Family::Tcn,
            depth: 4,
            input_features: 5,
            hidden: 40,
            seq_len: 11,
            kernel: 2,
            dilations: Vec::new(),
            dropout: 0.0,
            sigma_link: SigmaLink::SoftplusEpsilon,
            disc_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn with_family(family: Family, depth: usize) -> Self {
        ModelConfig {
            family,
            depth,
            ..Self::default()
        }
    }

    pub fn dilations(&self) -> Vec<usize> {
        if self.dilations.is_empty() {
            Tcn::default_dilations(self.depth)
        } else {
            self.dilations.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("depth", self.depth),
            ("input_features", self.input_features),
            ("hidden", self.hidden),
            ("seq_len", self.seq_len),
            ("kernel", self.kernel),
            ("disc_hidden", self.disc_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::contract(format!("model config: {name} must be positive")));
        }
        if !(0.0..=0.5).contains(&self.dropout) {
            return Err(Error::contract("model config: dropout must lie in [0, 0.5]"));
        }
        if self.family == Family::Tcn {
            let d = self.dilations();
            if d.len() != self.depth || d.contains(&0) {
                return Err(Error::contract("model config: need one positive dilation per block"));
            }
        }
        Ok(())
    }
}
