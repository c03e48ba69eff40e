use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tcn_dann::autodiff::Parameterized;
use tcn_dann::data::{load_seasons_csv, write_seasons_csv, CropSeason, DataConfig, Dataset, DomainData};
use tcn_dann::error::Error;
use tcn_dann::harness::{
    params_table, run_experiment, run_gradcheck, standard_cases, Checkpoint, ExperimentSpec, Regime,
};
use tcn_dann::model::{DannModel, Family, ModelConfig, SequenceModel};
use tcn_dann::training::{evaluate, pretrain_finetune, train_dann, train_direct, EvalReport, TrainingConfig};

/// Domain-adversarial crop-growth regression with TCN and LSTM backbones.
#[derive(Parser)]
#[command(name = "tcn-dann", version)]
struct Cli {
    /// Seed for data generation, splits, initialisation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where outputs are written.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// TOML or JSON file with `training`, `model`, `source`, `shift`,
    /// `data` sections and the experiment grid fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parallel runs for `experiment`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate source and target seasons and write them as CSV.
    Generate,
    /// Train one model and write its checkpoint and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint in label units.
    Evaluate(EvalArgs),
    /// Print the parameter-size table.
    CountParams,
    /// Finite-difference check of every layer, loss and the full objective.
    Gradcheck,
    /// Run the full evaluation grid.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory with `source.csv` and `target.csv` from `generate`;
    /// simulated in memory when absent.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// direct-target, finetune or dann
    #[arg(long, value_parser = parse_regime)]
    regime: Regime,
    /// mlp, lstm or tcn
    #[arg(long, value_parser = parse_family)]
    backbone: Family,
    /// Extractor depth (ignored by the fixed MLP trunk).
    #[arg(long)]
    layers: Option<usize>,
    /// Overrides `training.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    TargetTest,
    TargetTrain,
    Source,
}

#[derive(Args)]
struct EvalArgs {
    /// `checkpoint.json` written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "target-test")]
    split: Split,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Overrides `training.epochs` (and `finetune_epochs`).
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated seed list; overrides the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    data: DataArgs,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status: 1 for numeric failures, 2 for usage and I/O problems.
enum Failure {
    Numeric(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) | Error::Domain { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let spec = match &cli.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Generate => generate(&spec, seed, &cli.out_dir),
        Command::Train(args) => train(&spec, seed, &cli.out_dir, &args),
        Command::Evaluate(args) => evaluate_cmd(&spec, cli.seed, &cli.out_dir, &args),
        Command::CountParams => count_params(&spec, &cli.out_dir),
        Command::Gradcheck => gradcheck(seed, &cli.out_dir),
        Command::Experiment(args) => experiment(spec, cli.seed, cli.jobs, &cli.out_dir, &args),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v).map_err(Error::from)?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    source_seasons: usize,
    target_seasons: usize,
    source_windows: usize,
    target_windows: usize,
    target_train_windows: usize,
    target_test_windows: usize,
    config: &'a ExperimentSpec,
}

fn generate(spec: &ExperimentSpec, seed: u64, out: &Path) -> CliResult<()> {
    let (source, target) = spec.simulate(seed)?;
    let data = DataConfig {
        split_seed: seed,
        ..spec.data.clone()
    };
    let windows = data.split(&source, &target)?;
    create_dir(out)?;
    write_seasons_csv(&out.join("source.csv"), &source)?;
    write_seasons_csv(&out.join("target.csv"), &target)?;
    let manifest = Manifest {
        seed,
        source_seasons: source.len(),
        target_seasons: target.len(),
        source_windows: windows.source.len(),
        target_windows: windows.target_train.len() + windows.target_test.len(),
        target_train_windows: windows.target_train.len(),
        target_test_windows: windows.target_test.len(),
        config: spec,
    };
    write(&out.join("manifest.json"), json(&manifest)?)?;
    println!(
        "{} source seasons ({} windows), {} target seasons ({} windows: {} train, {} test) -> {}",
        manifest.source_seasons,
        manifest.source_windows,
        manifest.target_seasons,
        manifest.target_windows,
        manifest.target_train_windows,
        manifest.target_test_windows,
        out.display()
    );
    Ok(())
}

fn load_seasons(dir: &Path) -> CliResult<(Vec<CropSeason>, Vec<CropSeason>)> {
    Ok((
        load_seasons_csv(&dir.join("source.csv"))?,
        load_seasons_csv(&dir.join("target.csv"))?,
    ))
}

fn domain_data(spec: &ExperimentSpec, seed: u64, data: &DataArgs) -> CliResult<DomainData> {
    let seasons = data.data.as_deref().map(load_seasons).transpose()?;
    Ok(spec.data_for_seed(seed, seasons.as_ref())?)
}

fn print_report(label: &str, r: &EvalReport) {
    println!(
        "{label}: MAE {:.6}  RMSE {:.6}  NLL {:.6}  ({} windows)",
        r.mae, r.rmse, r.nll, r.windows
    );
}

fn train(spec: &ExperimentSpec, seed: u64, out: &Path, args: &TrainArgs) -> CliResult<()> {
    if args.regime == Regime::Dann && args.backbone == Family::Mlp {
        return Err(Failure::Usage("the dann regime needs an lstm or tcn backbone".into()));
    }
    let model_cfg = ModelConfig {
        family: args.backbone,
        depth: args.layers.unwrap_or(spec.model.depth),
        ..spec.model.clone()
    };
    let cfg = TrainingConfig {
        seed,
        epochs: args.epochs.unwrap_or(spec.training.epochs),
        ..spec.training.clone()
    };
    let data = domain_data(spec, seed, &args.data)?;
    create_dir(out)?;
    let (log, checkpoint) = match args.regime {
        Regime::DirectTarget | Regime::Finetune => {
            let mut m = SequenceModel::new(model_cfg, seed)?;
            let log = if args.regime == Regime::Finetune {
                pretrain_finetune(&mut m, &data, &cfg)?
            } else {
                train_direct(&mut m, &data, &cfg)?
            };
            (log, Checkpoint::from_model(&m, &data.stats, &cfg, seed)?)
        }
        Regime::Dann => {
            let mut m = DannModel::new(model_cfg, seed)?;
            let log = train_dann(&mut m, &data, &cfg)?;
            (log, Checkpoint::from_dann(&m, &data.stats, &cfg, seed)?)
        }
    };
    checkpoint.save(&out.join("checkpoint.json"))?;
    log.write_files(&out.join("metrics.jsonl"), &out.join("curve.csv"))?;
    let model = checkpoint.sequence_model()?;
    println!(
        "{} {} depth {}: extractor {} params, regressor {}",
        args.regime,
        args.backbone,
        model.config.depth,
        model.extractor.param_count(),
        model.regressor.param_count()
    );
    if let Some(last) = log.last() {
        println!(
            "final epoch {}: target-test MAE {:.6}  RMSE {:.6}  NLL {:.6}",
            last.epoch, last.test_mae, last.test_rmse, last.test_nll
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn evaluate_cmd(spec: &ExperimentSpec, seed: Option<u64>, out: &Path, args: &EvalArgs) -> CliResult<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let model = checkpoint.sequence_model()?;
    let stats = checkpoint.stats()?;
    let seed = seed.unwrap_or(checkpoint.seed);
    let (src, tgt) = match args.data.data.as_deref() {
        Some(dir) => load_seasons(dir)?,
        None => spec.simulate(seed)?,
    };
    let windows = DataConfig {
        split_seed: seed,
        ..spec.data.clone()
    }
    .split(&src, &tgt)?;
    let raw = match args.split {
        Split::TargetTest => &windows.target_test,
        Split::TargetTrain => &windows.target_train,
        Split::Source => &windows.source,
    };
    // inputs are scaled with the statistics stored at training time
    let data: Dataset = stats.apply_dataset(raw)?;
    let report = evaluate(&model, &data, &stats)?;
    print_report("evaluation", &report);
    create_dir(out)?;
    write(&out.join("evaluation.json"), json(&report)?)?;
    Ok(())
}

fn count_params(spec: &ExperimentSpec, out: &Path) -> CliResult<()> {
    let table = params_table(&spec.model)?;
    print!("{}", table.render());
    if out.exists() {
        write(&out.join("params.csv"), table.to_csv())?;
    }
    Ok(())
}

fn gradcheck(seed: u64, out: &Path) -> CliResult<()> {
    let report = run_gradcheck(&standard_cases(), seed);
    print!("{}", report.render());
    if out.exists() {
        write(&out.join("gradcheck.csv"), report.to_csv())?;
    }
    if report.passed() {
        println!("all {} components pass", report.rows.len());
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "gradient check failed: {}",
            report.failures().join(", ")
        )))
    }
}

fn experiment(
    mut spec: ExperimentSpec,
    seed: Option<u64>,
    jobs: usize,
    out: &Path,
    args: &ExperimentArgs,
) -> CliResult<()> {
    if let Some(e) = args.epochs {
        spec.training.epochs = e;
        spec.training.finetune_epochs = e;
    }
    if let Some(seeds) = &args.seeds {
        spec.seeds = seeds.clone();
    } else if let Some(s) = seed {
        spec.seeds = (s..s + spec.seeds.len() as u64).collect();
    }
    let seasons = args.data.data.as_deref().map(load_seasons).transpose()?;
    create_dir(out)?;
    let report = run_experiment(&spec, seasons.as_ref(), jobs, Some(out))?;
    let mut depths = spec.depths.clone();
    depths.sort_unstable();
    print!("{}", report.render(spec.model.depth, &depths));
    println!("wrote {}", out.display());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("{} run(s) failed", report.failures.len())))
    }
}
