//! Parameter-size table for the sequence backbones and the two heads.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Parameterized;
use crate::error::Result;
use crate::model::{Backbone, DannModel, Family, ModelConfig};

pub const TABLE_DEPTHS: [usize; 3] = [1, 2, 4];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamsTable {
    /// `(family, counts at TABLE_DEPTHS)` for the LSTM and TCN extractors.
    pub extractors: Vec<(Family, [usize; 3])>,
    pub regressor: usize,
    pub discriminator: usize,
}

/// `23680` → `"23,680"`.
pub fn with_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Counts for `base` with the family and depth swapped in.
pub fn params_table(base: &ModelConfig) -> Result<ParamsTable> {
    let mut extractors = Vec::new();
    for family in [Family::Lstm, Family::Tcn] {
        let mut counts = [0; 3];
        for (slot, &depth) in counts.iter_mut().zip(&TABLE_DEPTHS) {
            let cfg = ModelConfig {
                family,
                depth,
                dilations: Vec::new(),
                ..base.clone()
            };
            cfg.validate()?;
            *slot = Backbone::new(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).param_count();
        }
        extractors.push((family, counts));
    }
    // the heads do not depend on the backbone
    let full = DannModel::new(
        ModelConfig {
            family: Family::Tcn,
            ..base.clone()
        },
        0,
    )?;
    Ok(ParamsTable {
        extractors,
        regressor: full.net.regressor.param_count(),
        discriminator: full.discriminator.param_count(),
    })
}

impl ParamsTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:<14}{:>10}{:>10}{:>10}\n", "model", "1 layer", "2 layers", "4 layers");
        for (family, c) in &self.extractors {
            let _ = writeln!(
                out,
                "{:<14}{:>10}{:>10}{:>10}",
                family.to_string().to_uppercase(),
                with_thousands(c[0]),
                with_thousands(c[1]),
                with_thousands(c[2])
            );
        }
        let _ = writeln!(out, "{:<14}{:>10}", "regressor", with_thousands(self.regressor));
        let _ = writeln!(out, "{:<14}{:>10}", "discriminator", with_thousands(self.discriminator));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,depth,params\n");
        for (family, c) in &self.extractors {
            for (d, n) in TABLE_DEPTHS.iter().zip(c) {
                let _ = writeln!(out, "{family},{d},{n}");
            }
        }
        let _ = writeln!(out, "regressor,,{}", self.regressor);
        let _ = writeln!(out, "discriminator,,{}", self.discriminator);
        out
    }
}
