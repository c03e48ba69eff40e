//! The evaluation grid: direct-target, fine-tuned and adversarial models
//! over backbones, depths and seeds, with median summary tables and
//! adversarial learning curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::params_table;
use crate::data::{
    make_domain_datasets, simulate_seasons, CropSeason, DataConfig, DomainData, ShiftDeltas, SimulatorConfig,
};
use crate::error::{Error, Result};
use crate::model::{DannModel, Family, ModelConfig, SequenceModel};
use crate::training::{pretrain_finetune, train_dann, train_direct, MetricsLog, TrainingConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Trained on the labelled target windows only.
    DirectTarget,
    /// Source pretraining, then target fine-tuning.
    Finetune,
    Dann,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::DirectTarget => "direct-target",
            Regime::Finetune => "finetune",
            Regime::Dann => "dann",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" | "direct-target" => Ok(Regime::DirectTarget),
            "finetune" => Ok(Regime::Finetune),
            "dann" => Ok(Regime::Dann),
            _ => Err(Error::contract(format!(
                "unknown regime '{s}' (expected direct-target, finetune or dann)"
            ))),
        }
    }
}

/// One grid configuration. The MLP trunk has a fixed depth, so its cells
/// carry `depth: None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub regime: Regime,
    pub family: Family,
    pub depth: Option<usize>,
}

impl Cell {
    pub fn new(regime: Regime, family: Family, depth: usize) -> Result<Self> {
        if regime == Regime::Dann && family == Family::Mlp {
            return Err(Error::contract("the dann regime needs an lstm or tcn backbone"));
        }
        let depth = (family != Family::Mlp).then_some(depth);
        Ok(Cell { regime, family, depth })
    }

    /// e.g. `dann-tcn-4`, `direct-target-mlp`.
    pub fn name(&self) -> String {
        match self.depth {
            Some(d) => format!("{}-{}-{d}", self.regime, self.family),
            None => format!("{}-{}", self.regime, self.family),
        }
    }

    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        let depth = self.depth.unwrap_or(base.depth);
        // explicit dilations only make sense at the depth they were given for
        let dilations = if base.dilations.len() == depth {
            base.dilations.clone()
        } else {
            Vec::new()
        };
        ModelConfig {
            family: self.family,
            depth,
            dilations,
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub families: Vec<Family>,
    pub depths: Vec<usize>,
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    /// Architecture shared by every cell; family and depth are overridden.
    pub model: ModelConfig,
    pub training: TrainingConfig,
    /// Source domain; each run's simulator seed is replaced by the run seed.
    pub source: SimulatorConfig,
    /// Target domain = `source` shifted by these deltas.
    pub shift: ShiftDeltas,
    pub data: DataConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            families: vec![Family::Mlp, Family::Lstm, Family::Tcn],
            depths: vec![1, 2, 4],
            regimes: vec![Regime::DirectTarget, Regime::Finetune, Regime::Dann],
            seeds: vec![0, 1, 2],
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            source: SimulatorConfig::default(),
            shift: ShiftDeltas::default(),
            data: DataConfig::default(),
        }
    }
}

impl ExperimentSpec {
    /// Every runnable cell, in a fixed order; adversarial MLP cells are
    /// skipped.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &regime in &self.regimes {
            for &family in &self.families {
                if regime == Regime::Dann && family == Family::Mlp {
                    continue;
                }
                if family == Family::Mlp {
                    out.push(Cell {
                        regime,
                        family,
                        depth: None,
                    });
                } else {
                    out.extend(self.depths.iter().map(|&d| Cell {
                        regime,
                        family,
                        depth: Some(d),
                    }));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::contract("experiment needs at least one seed"));
        }
        if self.cells().is_empty() {
            return Err(Error::contract("experiment grid is empty"));
        }
        self.training.validate()?;
        for cell in self.cells() {
            cell.model_config(&self.model).validate()?;
        }
        self.source.validate()?;
        self.source.shifted(&self.shift).validate()
    }

    /// Reads a TOML or JSON file (by extension); absent fields keep their
    /// defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let spec: ExperimentSpec = if is_json {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(spec)
    }

    /// Source and target seasons for one seed; target season ids continue
    /// after the source ids.
    pub fn simulate(&self, seed: u64) -> Result<(Vec<CropSeason>, Vec<CropSeason>)> {
        let src = SimulatorConfig {
            seed,
            ..self.source.clone()
        };
        let tgt = src.shifted(&self.shift);
        src.validate()?;
        tgt.validate()?;
        let n = self.data.source_seasons;
        let m = self.data.target_seasons(tgt.season_length)?;
        Ok((simulate_seasons(&src, 0, n), simulate_seasons(&tgt, n as u64, m)))
    }

    /// Normalised data for one seed: simulated afresh, or split from
    /// `seasons` when given.
    pub fn data_for_seed(&self, seed: u64, seasons: Option<&(Vec<CropSeason>, Vec<CropSeason>)>) -> Result<DomainData> {
        let data = DataConfig {
            split_seed: seed,
            ..self.data.clone()
        };
        let windows = match seasons {
            Some((src, tgt)) => data.split(src, tgt)?,
            None => {
                let src = SimulatorConfig {
                    seed,
                    ..self.source.clone()
                };
                make_domain_datasets(&src, &src.shifted(&self.shift), &data)?
            }
        };
        windows.normalize()
    }
}

/// Trains one cell on one seed and returns its log.
pub fn run_cell(cell: Cell, spec: &ExperimentSpec, data: &DomainData, seed: u64) -> Result<MetricsLog> {
    let model_cfg = cell.model_config(&spec.model);
    let cfg = TrainingConfig {
        seed,
        ..spec.training.clone()
    };
    match cell.regime {
        Regime::DirectTarget => train_direct(&mut SequenceModel::new(model_cfg, seed)?, data, &cfg),
        Regime::Finetune => pretrain_finetune(&mut SequenceModel::new(model_cfg, seed)?, data, &cfg),
        Regime::Dann => train_dann(&mut DannModel::new(model_cfg, seed)?, data, &cfg),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub cell: Cell,
    pub seed: u64,
    /// Final-epoch target-test metrics, label units.
    pub mae: f64,
    pub rmse: f64,
    pub nll: f64,
    pub convergence_epoch: Option<usize>,
    pub rmse_curve: Vec<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    pub cell: Cell,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub cell: Cell,
    pub runs: usize,
    pub failures: usize,
    pub median_mae: Option<f64>,
    pub median_rmse: Option<f64>,
    /// A run that never converged counts as later than any that did;
    /// `None` if the median run did not converge.
    pub median_convergence: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentReport {
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
    pub summaries: Vec<CellSummary>,
    /// Epochs per run, for rendering non-converged entries.
    pub horizon: usize,
}

/// Median, averaging the two middle values of an even-sized sample.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median convergence epoch with `None` ranked after every epoch. For an
/// even count the lower middle is taken so the result is an actual epoch.
pub fn median_convergence(epochs: &[Option<usize>]) -> Option<usize> {
    if epochs.is_empty() {
        return None;
    }
    let mut v: Vec<usize> = epochs.iter().map(|e| e.unwrap_or(usize::MAX)).collect();
    v.sort_unstable();
    let m = v[(v.len() - 1) / 2];
    (m != usize::MAX).then_some(m)
}

fn summarize(cells: &[Cell], results: &[RunResult], failures: &[RunFailure]) -> Vec<CellSummary> {
    cells
        .iter()
        .map(|&cell| {
            let rs: Vec<&RunResult> = results.iter().filter(|r| r.cell == cell).collect();
            let maes: Vec<f64> = rs.iter().map(|r| r.mae).collect();
            let rmses: Vec<f64> = rs.iter().map(|r| r.rmse).collect();
            let conv: Vec<Option<usize>> = rs.iter().map(|r| r.convergence_epoch).collect();
            CellSummary {
                cell,
                runs: rs.len(),
                failures: failures.iter().filter(|f| f.cell == cell).count(),
                median_mae: median(&maes),
                median_rmse: median(&rmses),
                median_convergence: median_convergence(&conv),
            }
        })
        .collect()
}

/// Runs every `(cell, seed)` pair on a pool of `jobs` threads. A failing
/// run is recorded and the rest continue. With `out_dir`, per-run metrics
/// and all tables are written there.
pub fn run_experiment(
    spec: &ExperimentSpec,
    seasons: Option<&(Vec<CropSeason>, Vec<CropSeason>)>,
    jobs: usize,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let cells = spec.cells();
    let mut data = BTreeMap::new();
    for &seed in &spec.seeds {
        data.insert(seed, spec.data_for_seed(seed, seasons)?);
    }
    let run_dir = match out_dir {
        Some(dir) => {
            let d = dir.join("runs");
            std::fs::create_dir_all(&d)?;
            std::fs::write(dir.join("experiment.json"), serde_json::to_string_pretty(spec)?)?;
            Some(d)
        }
        None => None,
    };

    let tasks: Vec<(Cell, u64)> = cells
        .iter()
        .flat_map(|&c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))?;
    let window = spec.training.convergence_window;
    let tol = spec.training.convergence_tol;
    let outcomes: Vec<std::result::Result<RunResult, RunFailure>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(cell, seed)| {
                let started = Instant::now();
                let attempt = run_cell(cell, spec, &data[&seed], seed).and_then(|log| {
                    if let Some(dir) = &run_dir {
                        let stem = format!("{}-seed{seed}", cell.name());
                        log.write_files(
                            &dir.join(format!("{stem}.metrics.jsonl")),
                            &dir.join(format!("{stem}.curve.csv")),
                        )?;
                    }
                    let last = log.last().ok_or_else(|| Error::contract("run produced no epochs"))?;
                    Ok(RunResult {
                        cell,
                        seed,
                        mae: last.test_mae,
                        rmse: last.test_rmse,
                        nll: last.test_nll,
                        convergence_epoch: log.convergence_epoch(window, tol),
                        rmse_curve: log.test_rmse(),
                        seconds: started.elapsed().as_secs_f64(),
                    })
                });
                attempt.map_err(|e| RunFailure {
                    cell,
                    seed,
                    error: e.to_string(),
                })
            })
            .collect()
    });

    let mut report = ExperimentReport {
        horizon: spec.training.epochs,
        ..ExperimentReport::default()
    };
    for o in outcomes {
        match o {
            Ok(r) => report.results.push(r),
            Err(f) => report.failures.push(f),
        }
    }
    report.summaries = summarize(&cells, &report.results, &report.failures);
    if let Some(dir) = out_dir {
        report.write(dir, &spec.model)?;
    }
    Ok(report)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or("failed".to_string(), |x| format!("{x:.6}"))
}

fn fmt_conv(v: Option<usize>, horizon: usize) -> String {
    v.map_or(format!(">{horizon}"), |e| e.to_string())
}

fn csv_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub const SUMMARY_HEADER: &str =
    "cell,regime,family,depth,runs,failures,median_mae,median_rmse,median_convergence_epoch";
pub const RUNS_HEADER: &str = "cell,regime,family,depth,seed,mae,rmse,nll,convergence_epoch";
pub const CURVES_HEADER: &str = "family,depth,seed,epoch,test_rmse";
pub const CONVERGENCE_HEADER: &str = "family,depth,seed,convergence_epoch";

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self, cell: Cell) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.cell == cell)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.cell.name(),
                s.cell.regime,
                s.cell.family,
                csv_opt(s.cell.depth),
                s.runs,
                s.failures,
                csv_opt(s.median_mae.map(|v| format!("{v:.17e}"))),
                csv_opt(s.median_rmse.map(|v| format!("{v:.17e}"))),
                csv_opt(s.median_convergence)
            );
        }
        out
    }

    pub fn runs_csv(&self) -> String {
        let mut out = format!("{RUNS_HEADER}\n");
        for r in &self.results {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.17e},{:.17e},{:.17e},{}",
                r.cell.name(),
                r.cell.regime,
                r.cell.family,
                csv_opt(r.cell.depth),
                r.seed,
                r.mae,
                r.rmse,
                r.nll,
                csv_opt(r.convergence_epoch)
            );
        }
        out
    }

    fn dann_runs(&self) -> impl Iterator<Item = &RunResult> {
        self.results.iter().filter(|r| r.cell.regime == Regime::Dann)
    }

    /// Per-epoch target-test RMSE of every adversarial run, long format.
    pub fn curves_csv(&self) -> String {
        let mut out = format!("{CURVES_HEADER}\n");
        for r in self.dann_runs() {
            for (e, v) in r.rmse_curve.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{e},{v:.17e}",
                    r.cell.family,
                    csv_opt(r.cell.depth),
                    r.seed
                );
            }
        }
        out
    }

    pub fn convergence_csv(&self) -> String {
        let mut out = format!("{CONVERGENCE_HEADER}\n");
        for r in self.dann_runs() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.cell.family,
                csv_opt(r.cell.depth),
                r.seed,
                csv_opt(r.convergence_epoch)
            );
        }
        out
    }

    fn lookup(&self, regime: Regime, family: Family, depth: Option<usize>) -> Option<&CellSummary> {
        let depth = if family == Family::Mlp { None } else { depth };
        self.summary(Cell { regime, family, depth })
    }

    /// Direct-target backbones at the base depth.
    pub fn extractor_table(&self, depth: usize) -> String {
        let mut out = format!("{:<18}{:>12}{:>12}\n", "model", "MAE", "RMSE");
        for family in [Family::Mlp, Family::Lstm, Family::Tcn] {
            if let Some(s) = self.lookup(Regime::DirectTarget, family, Some(depth)) {
                let _ = writeln!(
                    out,
                    "{:<18}{:>12}{:>12}",
                    family.to_string().to_uppercase(),
                    fmt_metric(s.median_mae),
                    fmt_metric(s.median_rmse)
                );
            }
        }
        out
    }

    /// Fine-tuned and adversarial models at the base depth, with the
    /// convergence epoch.
    pub fn transfer_table(&self, depth: usize) -> String {
        let mut out = format!("{:<18}{:>12}{:>12}{:>14}\n", "model", "MAE", "RMSE", "converged at");
        let rows = [
            (Regime::Finetune, Family::Mlp),
            (Regime::Finetune, Family::Lstm),
            (Regime::Finetune, Family::Tcn),
            (Regime::Dann, Family::Lstm),
            (Regime::Dann, Family::Tcn),
        ];
        for (regime, family) in rows {
            if let Some(s) = self.lookup(regime, family, Some(depth)) {
                let label = match regime {
                    Regime::Dann => format!("DANN-{}", family.to_string().to_uppercase()),
                    _ => format!("{}-Finetuning", family.to_string().to_uppercase()),
                };
                let _ = writeln!(
                    out,
                    "{label:<18}{:>12}{:>12}{:>14}",
                    fmt_metric(s.median_mae),
                    fmt_metric(s.median_rmse),
                    fmt_conv(s.median_convergence, self.horizon)
                );
            }
        }
        out
    }

    /// LSTM and TCN under every regime, one column per depth.
    pub fn depth_table(&self, depths: &[usize]) -> String {
        let head = depths.iter().map(usize::to_string).collect::<Vec<_>>().join(" / ");
        let mut out = format!("{:<18}  MAE ({head})  |  RMSE ({head})\n", "model");
        for family in [Family::Lstm, Family::Tcn] {
            let name = family.to_string().to_uppercase();
            for (regime, label) in [
                (Regime::DirectTarget, name.clone()),
                (Regime::Finetune, format!("{name}-Finetuning")),
                (Regime::Dann, format!("DANN-{name}")),
            ] {
                let cells: Vec<Option<&CellSummary>> =
                    depths.iter().map(|&d| self.lookup(regime, family, Some(d))).collect();
                if cells.iter().all(Option::is_none) {
                    continue;
                }
                let col = |f: fn(&CellSummary) -> Option<f64>| {
                    cells
                        .iter()
                        .map(|c| c.map_or("-".to_string(), |s| fmt_metric(f(s))))
                        .collect::<Vec<_>>()
                        .join(" / ")
                };
                let _ = writeln!(
                    out,
                    "{label:<18}  {}  |  {}",
                    col(|s| s.median_mae),
                    col(|s| s.median_rmse)
                );
            }
        }
        out
    }

    fn depth_csv(&self) -> String {
        let mut out = String::from("model,depth,median_mae,median_rmse\n");
        for s in &self.summaries {
            if s.cell.family == Family::Mlp {
                continue;
            }
            let _ = writeln!(
                out,
                "{},{},{},{}",
                s.cell.name(),
                csv_opt(s.cell.depth),
                csv_opt(s.median_mae.map(|v| format!("{v:.17e}"))),
                csv_opt(s.median_rmse.map(|v| format!("{v:.17e}")))
            );
        }
        out
    }

    pub fn failures_text(&self) -> String {
        let mut out = String::new();
        for f in &self.failures {
            let _ = writeln!(out, "{} seed {}: {}", f.cell.name(), f.seed, f.error);
        }
        out
    }

    pub fn render(&self, base_depth: usize, depths: &[usize]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Feature extractors (direct-target, depth {base_depth}, median over seeds)"
        );
        out += &self.extractor_table(base_depth);
        let _ = writeln!(out, "\nTransfer learning (depth {base_depth}, median over seeds)");
        out += &self.transfer_table(base_depth);
        let _ = writeln!(out, "\nLSTM vs TCN by depth (median over seeds)");
        out += &self.depth_table(depths);
        if !self.failures.is_empty() {
            let _ = writeln!(out, "\nFailed runs");
            out += &self.failures_text();
        }
        out
    }

    fn write(&self, dir: &Path, model: &ModelConfig) -> Result<()> {
        let mut depths: Vec<usize> = self.summaries.iter().filter_map(|s| s.cell.depth).collect();
        depths.sort_unstable();
        depths.dedup();
        let files: Vec<(PathBuf, String)> = vec![
            (dir.join("summary.csv"), self.summary_csv()),
            (dir.join("runs.csv"), self.runs_csv()),
            (dir.join("depth_table.csv"), self.depth_csv()),
            (dir.join("dann_curves.csv"), self.curves_csv()),
            (dir.join("convergence.csv"), self.convergence_csv()),
            (dir.join("tables.txt"), self.render(model.depth, &depths)),
        ];
        for (path, text) in files {
            std::fs::write(path, text)?;
        }
        let params = params_table(model)?;
        std::fs::write(dir.join("params.csv"), params.to_csv())?;
        std::fs::write(dir.join("params.txt"), params.render())?;
        if !self.failures.is_empty() {
            std::fs::write(dir.join("failures.txt"), self.failures_text())?;
        }
        Ok(())
    }
}
