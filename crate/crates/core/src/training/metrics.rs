use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::detect_convergence;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Dann,
    Pretrain,
    Finetune,
    Direct,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Dann => "dann",
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
            Phase::Direct => "direct",
        })
    }
}

/// One epoch. Losses are per-step means in normalised units; test metrics
/// are in label units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub source_loss: Option<f64>,
    pub target_loss: Option<f64>,
    pub domain_loss: Option<f64>,
    pub domain_accuracy: Option<f64>,
    pub lambda: Option<f64>,
    pub test_mae: f64,
    pub test_rmse: f64,
    pub test_nll: f64,
}

/// Per-epoch records. Wall-clock times sit beside the records rather than
/// in them so that two runs with one seed produce identical logs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
    pub wall_clock_s: Vec<f64>,
}

pub const CURVE_HEADER: &str =
    "epoch,phase,source_loss,target_loss,domain_loss,domain_accuracy,lambda,test_mae,test_rmse,test_nll";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.17e}"))
}

impl MetricsLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: MetricsRecord, seconds: f64) {
        self.records.push(record);
        self.wall_clock_s.push(seconds);
    }

    pub fn next_epoch(&self) -> usize {
        self.records.last().map_or(1, |r| r.epoch + 1)
    }

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn test_rmse(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.test_rmse).collect()
    }

    pub fn convergence_epoch(&self, window: usize, tol: f64) -> Option<usize> {
        detect_convergence(&self.test_rmse(), window, tol)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out += &serde_json::to_string(r)?;
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records: Vec<MetricsRecord> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        let wall_clock_s = vec![0.0; records.len()];
        Ok(MetricsLog { records, wall_clock_s })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CURVE_HEADER}\n");
        for r in &self.records {
            out += &format!(
                "{},{},{},{},{},{},{},{:.17e},{:.17e},{:.17e}\n",
                r.epoch,
                r.phase,
                opt(r.source_loss),
                opt(r.target_loss),
                opt(r.domain_loss),
                opt(r.domain_accuracy),
                opt(r.lambda),
                r.test_mae,
                r.test_rmse,
                r.test_nll
            );
        }
        out
    }

    pub fn write_files(&self, jsonl: &Path, csv: &Path) -> Result<()> {
        std::fs::File::create(jsonl)?.write_all(self.to_jsonl()?.as_bytes())?;
        std::fs::File::create(csv)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}
