use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::commands::{
    cmd_compare, cmd_evaluate, cmd_fixture, cmd_predict, cmd_preprocess, cmd_train, write_predictions,
};
use super::config::{resolve_data_path, DataSource, PartitionName, RunConfig};
use crate::error::{arg_err, Result};
use crate::eval::ReportFormat;
use crate::nn::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "tcn-nids", version, about = "Train and evaluate TCN intrusion detectors on tabular traffic records")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (for `predict`, the output CSV file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Input CSV (`preprocess`, `predict`) or split directory (`train`,
    /// `evaluate`, `compare`).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Model kind for `train` (tcn, cnn_baseline); model file or directory
    /// for `evaluate` and `predict`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Partition to evaluate: train, val or test.
    #[arg(long, global = true)]
    pub split: Option<String>,
    /// Report format for `evaluate`: text, json, csv or all.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// More log output (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled CSV.
    Fixture(FixtureArgs),
    /// Clean, encode, rank, split and standardize a dataset.
    Preprocess(PipelineArgs),
    /// Train a model on a preprocessed split.
    Train(TrainArgs),
    /// Score a model on one partition and write reports.
    Evaluate,
    /// Classify raw CSV records.
    Predict,
    /// Train and test both model kinds on the same split.
    Compare(TrainArgs),
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub numeric: Option<usize>,
    #[arg(long)]
    pub categorical: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Generate the fixture described by the config instead of reading --data.
    #[arg(long)]
    pub fixture: bool,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub max_categories: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        c.seed = cli.seed;
    }
    if cli.out.is_some() {
        c.out = cli.out.clone();
    }
    Ok(c)
}

fn apply_train_args(c: &mut RunConfig, a: &TrainArgs, model: Option<&str>) -> Result<()> {
    if let Some(e) = a.epochs {
        c.train.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        c.train.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        c.train.batch_size = b;
    }
    if let Some(m) = model {
        c.model.kind = m.parse()?;
    }
    Ok(())
}

fn split_dir(cli: &Cli, c: &RunConfig) -> Result<PathBuf> {
    cli.data
        .clone()
        .or_else(|| c.data.clone())
        .ok_or_else(|| arg_err("--data must name a split directory"))
}

fn model_path(cli: &Cli) -> Result<PathBuf> {
    cli.model
        .as_ref()
        .map(PathBuf::from)
        .ok_or_else(|| arg_err("--model must name a model file or directory"))
}

fn formats(cli: &Cli) -> Result<Vec<ReportFormat>> {
    match cli.format.as_deref() {
        None | Some("all") => Ok(ReportFormat::ALL.to_vec()),
        Some(f) => Ok(vec![f.parse()?]),
    }
}

/// Executes a parsed command line, printing results to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let mut c = base_config(cli)?;
    match &cli.command {
        Command::Fixture(a) => {
            let mut f = c.fixture.clone().unwrap_or_default();
            f.classes = a.classes.unwrap_or(f.classes);
            f.per_class = a.per_class.unwrap_or(f.per_class);
            f.numeric_features = a.numeric.unwrap_or(f.numeric_features);
            f.categorical_features = a.categorical.unwrap_or(f.categorical_features);
            f.separation = a.separation.unwrap_or(f.separation);
            let seed = c.require_seed()?;
            let out = c
                .out
                .clone()
                .or_else(|| std::env::var_os(super::config::DATA_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let o = cmd_fixture(&f, seed, &out)?;
            writeln!(stdout, "wrote {} ({} rows, sha256 {})", o.csv_path.display(), f.classes * f.per_class, o.sha256)?;
            for (name, n) in &o.class_counts {
                writeln!(stdout, "{name:<24}{n}")?;
            }
        }
        Command::Preprocess(a) => {
            if a.fixture {
                c.fixture.get_or_insert_with(Default::default);
                c.data = None;
            } else if let Some(d) = &cli.data {
                c.data = Some(d.clone());
                c.fixture = None;
            }
            let mut p = c.pipeline_or_default();
            p.fraction = a.fraction.unwrap_or(p.fraction);
            p.max_categories = a.max_categories.unwrap_or(p.max_categories);
            if a.top_k.is_some() {
                p.top_k = a.top_k;
            }
            if let Some(l) = &a.label_column {
                p.label_column = l.clone();
            }
            let source = c.data_source()?;
            if let DataSource::Csv(path) = &source {
                log::info!("reading {}", path.display());
            }
            let o = cmd_preprocess(&source, &p, c.require_seed()?, &c.out_dir())?;
            writeln!(stdout, "wrote {}", o.dir.display())?;
            writeln!(
                stdout,
                "rows: train {} / val {} / test {}; features {}",
                o.split.train.rows,
                o.split.val.rows,
                o.split.test.rows,
                o.split.feature_names.len()
            )?;
            writeln!(
                stdout,
                "cleaning: {} rows in, {} dropped, {} columns dropped, {} imputations",
                o.report.rows_in,
                o.report.dropped_rows,
                o.report.dropped_columns.len(),
                o.report.imputations
            )?;
        }
        Command::Train(a) => {
            apply_train_args(&mut c, a, cli.model.as_deref())?;
            let seed = c.require_seed()?;
            let dir = resolve_data_path(&split_dir(cli, &c)?);
            let o = cmd_train(&dir, &c.model, &c.train, seed, c.pipeline.as_ref(), &c.out_dir())?;
            let last = o.logs.last().expect("at least one epoch");
            writeln!(stdout, "wrote {}", o.model_path.display())?;
            writeln!(
                stdout,
                "epoch {}: val loss {:.4}, val accuracy {:.4}",
                last.epoch, last.val_loss, last.val_accuracy
            )?;
        }
        Command::Evaluate => {
            let which: PartitionName = cli.split.as_deref().unwrap_or("test").parse()?;
            let model = model_path(cli)?;
            let out = c.out.clone().unwrap_or_else(|| {
                let m = super::commands::model_file(&model);
                m.parent().map(PathBuf::from).unwrap_or_default()
            });
            let o = cmd_evaluate(&model, &resolve_data_path(&split_dir(cli, &c)?), which, &out, &formats(cli)?)?;
            writeln!(
                stdout,
                "{}: accuracy {:.4}, loss {:.4}",
                which.as_str(),
                o.evaluation.accuracy,
                o.evaluation.loss
            )?;
            for f in &o.files {
                writeln!(stdout, "wrote {}", f.display())?;
            }
        }
        Command::Predict => {
            let data = cli
                .data
                .clone()
                .or(c.data.clone())
                .ok_or_else(|| arg_err("--data must name a CSV file"))?;
            let preds = cmd_predict(&model_path(cli)?, &resolve_data_path(&data))?;
            match &cli.out {
                Some(path) => {
                    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                        std::fs::create_dir_all(parent)?;
                    }
                    write_predictions(&preds, std::fs::File::create(path)?)?
                }
                None => write_predictions(&preds, &mut *stdout)?,
            }
        }
        Command::Compare(a) => {
            apply_train_args(&mut c, a, None)?;
            let seed = c.require_seed()?;
            let dir = resolve_data_path(&split_dir(cli, &c)?);
            let kinds = match cli.model.as_deref() {
                Some(list) => list.split(',').map(str::parse).collect::<Result<Vec<ModelKind>>>()?,
                None => vec![ModelKind::CnnBaseline, ModelKind::Tcn],
            };
            let o = cmd_compare(&dir, &kinds, &c.model, &c.train, seed, &c.out_dir())?;
            write!(stdout, "{}", o.table)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
