use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use super::config::{parse_distribution, parse_synthetic, DataSource, LoadedData, SchemaFile, TrainConfig};
use super::output::{prepare_dir, write_outputs};
use super::sweep::{mean_std, run_sweep, SweepGrid};
use super::train::{repeat_seeds, run_on, RunResult, RunStatus};
use crate::data::{generate_synthetic, BatchMode, SyntheticSpec, Target};
use crate::error::{Error, Result};
use crate::estimator::EstimatorMode;
use crate::optim::OptimizerKind;
use crate::theory::verification_suite;

#[derive(Debug, Parser)]
#[command(name = "gce", version, about = "Train and compare categorical models under classic and GCE gradient scaling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration, once per seed.
    Train(RunArgs),
    /// Train a grid of optimizers, estimators, batch sizes and models.
    Sweep(RunArgs),
    /// Run the numerical checks of the estimator and loss identities.
    Verify,
    /// Write a synthetic data set with its schema and true parameters.
    Synth(SynthArgs),
}

#[derive(Debug, Default, Args)]
struct RunArgs {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training CSV (split into train/test unless --test-data is given).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out CSV.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// TOML schema naming the target, feature and covariate columns.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Generated data instead of CSV, e.g. `card=50;dist=zipf:1.5;n=2000;noise=0.1;seed=0`.
    #[arg(long)]
    synthetic: Option<String>,
    /// `mlp[:4,8,4][+cov]`, `resnet[:8,2][+cov]` or `product[:f1,f2][*cov][+b]`;
    /// sweeps take several separated by `;`.
    #[arg(long)]
    model: Option<String>,
    /// sgd, adagrad or adam (comma list in sweeps; default adam, or all three in sweeps).
    #[arg(long)]
    optimizer: Option<String>,
    /// classic or gce (comma list in sweeps; default gce, or both in sweeps).
    #[arg(long)]
    estimator: Option<String>,
    /// A size, a comma list, or `lo..hi` for every power of two in between.
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds, starting from --seed.
    #[arg(long)]
    repeats: Option<usize>,
    /// Learning rate for every optimizer (default: per optimizer).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Draw batches with replacement instead of partitioning a shuffle.
    #[arg(long)]
    with_replacement: bool,
    /// Leave covariates unscaled.
    #[arg(long)]
    no_scale: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Train in f32 instead of f64 (train only).
    #[arg(long)]
    single_precision: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Alphabet sizes, one per feature.
    #[arg(long, default_value = "10", value_delimiter = ',')]
    cardinalities: Vec<usize>,
    /// `uniform` or `zipf:<exponent>`.
    #[arg(long, default_value = "uniform")]
    distribution: String,
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum BatchSizes {
    Size(usize),
    List(Vec<usize>),
    Text(String),
}

/// Contents of a `--config` file. Keys mirror the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    test_data: Option<PathBuf>,
    schema: Option<PathBuf>,
    synthetic: Option<SyntheticSpec>,
    model: Option<OneOrMany<String>>,
    optimizer: Option<OneOrMany<String>>,
    estimator: Option<OneOrMany<String>>,
    batch_size: Option<BatchSizes>,
    epochs: Option<usize>,
    seed: Option<u64>,
    repeats: Option<usize>,
    lr: Option<f64>,
    test_fraction: Option<f64>,
    batch_mode: Option<BatchMode>,
    scale_covariates: Option<bool>,
    out: Option<PathBuf>,
}

impl FileConfig {
    fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Run(other),
        }
    }
}

/// `32..1024` gives every power-of-two multiple of 32 up to 1024; also
/// accepts a single size or a comma list.
pub fn parse_batch_sizes(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse batch sizes {text:?}"));
    let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(bad);
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (parse(lo)?, parse(hi)?);
        if lo > hi {
            return Err(bad());
        }
        return Ok(std::iter::successors(Some(lo), |&b| b.checked_mul(2)).take_while(|&b| b <= hi).collect());
    }
    text.split(',').map(parse).collect()
}

fn split_list(text: &str, sep: char) -> Vec<String> {
    text.split(sep).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

struct Resolved {
    base: TrainConfig,
    models: Vec<String>,
    optimizers: Vec<OptimizerKind>,
    estimators: Vec<EstimatorMode>,
    batch_sizes: Vec<usize>,
    out: Option<PathBuf>,
}

fn resolve(args: &RunArgs, sweeping: bool) -> Result<Resolved, Failure> {
    let file = match &args.config {
        Some(path) => FileConfig::read(path)?,
        None => FileConfig::default(),
    };
    let synthetic = match &args.synthetic {
        Some(text) => Some(parse_synthetic(text)?),
        None => file.synthetic.clone(),
    };
    let data_path = args.data.clone().or(file.data.clone());
    let data = match (synthetic, data_path) {
        (Some(_), Some(_)) => return Err(Failure::Usage("give either --data or --synthetic, not both".into())),
        (Some(spec), None) => DataSource::Synthetic(spec),
        (None, Some(train)) => {
            let schema = args
                .schema
                .clone()
                .or(file.schema.clone())
                .ok_or_else(|| Failure::Usage("--data needs --schema".into()))?;
            DataSource::Csv { train, test: args.test_data.clone().or(file.test_data.clone()), schema }
        }
        (None, None) => return Err(Failure::Usage("missing --data (or --synthetic)".into())),
    };

    let list = |flag: &Option<String>, from_file: Option<OneOrMany<String>>, sep: char, default: &[&str]| {
        match flag {
            Some(text) => split_list(text, sep),
            None => from_file.map_or_else(|| default.iter().map(|d| d.to_string()).collect(), OneOrMany::into_vec),
        }
    };
    // A sweep without explicit lists covers the full optimizer x estimator table.
    let (default_opts, default_ests): (&[&str], &[&str]) =
        if sweeping { (&["sgd", "adagrad", "adam"], &["classic", "gce"]) } else { (&["adam"], &["gce"]) };
    let models = list(&args.model, file.model, ';', &["mlp"]);
    let optimizers = list(&args.optimizer, file.optimizer, ',', default_opts)
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<OptimizerKind>>>()?;
    let estimators = list(&args.estimator, file.estimator, ',', default_ests)
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<EstimatorMode>>>()?;
    let batch_sizes = match (&args.batch_size, file.batch_size) {
        (Some(text), _) => parse_batch_sizes(text)?,
        (None, Some(BatchSizes::Text(text))) => parse_batch_sizes(&text)?,
        (None, Some(BatchSizes::Size(b))) => vec![b],
        (None, Some(BatchSizes::List(v))) => v,
        (None, None) => vec![32],
    };
    if models.is_empty() || optimizers.is_empty() || estimators.is_empty() || batch_sizes.is_empty() {
        return Err(Failure::Usage("empty model, optimizer, estimator or batch-size list".into()));
    }

    let mut base = TrainConfig::new(data, models[0].clone());
    base.optimizer = optimizers[0];
    base.estimator = estimators[0];
    base.batch_size = batch_sizes[0];
    base.epochs = args.epochs.or(file.epochs).unwrap_or(base.epochs);
    base.seed = args.seed.or(file.seed).unwrap_or(base.seed);
    base.repeats = args.repeats.or(file.repeats).unwrap_or(base.repeats);
    base.lr = args.lr.or(file.lr);
    base.test_fraction = args.test_fraction.or(file.test_fraction).unwrap_or(base.test_fraction);
    base.batch_mode = if args.with_replacement {
        BatchMode::WithReplacement
    } else {
        file.batch_mode.unwrap_or_default()
    };
    base.scale_covariates = !args.no_scale && file.scale_covariates.unwrap_or(true);
    for model in &models {
        TrainConfig { model: model.clone(), ..base.clone() }.validate()?;
    }
    Ok(Resolved { base, models, optimizers, estimators, batch_sizes, out: args.out.clone().or(file.out) })
}

fn data_line(data: &LoadedData) -> String {
    let counts = match &data.test {
        Some(t) => format!("{} train / {} test rows", data.train.len(), t.len()),
        None => format!("{} rows", data.train.len()),
    };
    format!("data {}: {counts}, {} features", data.name, data.train.schema().num_features())
}

fn train(args: &RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let r = resolve(args, false)?;
    if r.models.len() > 1 || r.optimizers.len() > 1 || r.estimators.len() > 1 || r.batch_sizes.len() > 1 {
        return Err(Failure::Usage("train takes a single model, optimizer, estimator and batch size; use sweep".into()));
    }
    let config = r.base;
    let data = config.data.load()?;
    let _ = writeln!(out, "{}", data_line(&data));
    let jobs: Vec<(usize, u64)> = repeat_seeds(&config).collect();
    let runs: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(repeat, seed)| {
            let c = TrainConfig { seed, ..config.clone() };
            let run = if args.single_precision { run_on::<f32>(&c, &data, repeat) } else { run_on::<f64>(&c, &data, repeat) };
            run.unwrap_or_else(|e| RunResult::failed(&data, &c, repeat, &e))
        })
        .collect();
    for run in &runs {
        let status = match &run.status {
            RunStatus::Ok => format!("{:?} {:.6}", run.metric, run.final_metric.unwrap_or(f64::NAN)),
            RunStatus::Diverged { epoch } => format!("diverged in epoch {epoch}"),
            RunStatus::Failed { message } => format!("failed: {message}"),
        };
        let _ = writeln!(out, "seed {}: {status} ({:.2}s)", run.config.seed, run.wall_time);
    }
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_metric).collect();
    if let Some((m, s)) = mean_std(&finals) {
        let _ = writeln!(out, "{} {}: {m:.6} ± {s:.6} over {} runs", config.model, super::sweep::column_label(config.optimizer, config.estimator), finals.len());
    }
    if let Some(dir) = &r.out {
        write_outputs(&runs, dir, args.force)?;
        let _ = writeln!(out, "wrote {}", dir.display());
    }
    Ok(if runs.iter().all(RunResult::is_ok) { 0 } else { 1 })
}

fn sweep(args: &RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if args.single_precision {
        return Err(Failure::Usage("--single-precision only applies to train".into()));
    }
    let r = resolve(args, true)?;
    if let Some(dir) = &r.out {
        prepare_dir(dir, args.force)?;
    }
    let grid = SweepGrid {
        datasets: Vec::new(),
        models: r.models,
        optimizers: r.optimizers,
        estimators: r.estimators,
        batch_sizes: r.batch_sizes,
    };
    let result = run_sweep(&r.base, &grid)?;
    for table in result.tables() {
        let _ = writeln!(out, "model {}, batch {}", table.model, table.batch_size);
        let _ = writeln!(out, "{}", table.to_csv()?);
    }
    if let Some(dir) = &r.out {
        write_outputs(&result.runs, dir, true)?;
        let _ = writeln!(out, "wrote {}", dir.display());
    }
    Ok(if result.runs.iter().any(RunResult::is_ok) { 0 } else { 1 })
}

fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let spec = SyntheticSpec {
        cardinalities: args.cardinalities.clone(),
        distribution: parse_distribution(&args.distribution)?,
        n: args.rows,
        noise_std: args.noise,
        seed: args.seed,
    };
    let (data, truth) = generate_synthetic(&spec)?;
    prepare_dir(&args.out, args.force)?;
    let schema = data.schema();
    let names: Vec<String> = schema.features().iter().map(|f| f.name().to_string()).collect();
    let csv_path = args.out.join("data.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::csv(&csv_path, e))?;
    let mut header = names.clone();
    header.push("y".into());
    w.write_record(&header).map_err(|e| Error::csv(&csv_path, e))?;
    for row in data.rows() {
        let mut record: Vec<String> =
            row.symbols.iter().enumerate().map(|(f, &s)| schema.symbol_name(f, s).to_string()).collect();
        match row.target {
            Target::Value(y) => record.push(y.to_string()),
            Target::Class(c) => record.push(c.to_string()),
        }
        w.write_record(&record).map_err(|e| Error::csv(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let file = SchemaFile {
        target: "y".into(),
        features: names,
        covariates: Vec::new(),
        task: data.task(),
        class_labels: None,
        alphabets: schema.features().iter().map(|f| (f.name().to_string(), f.alphabet().to_vec())).collect(),
    };
    let schema_path = args.out.join("schema.toml");
    std::fs::write(&schema_path, file.to_toml()?).map_err(|e| Error::io(&schema_path, e))?;
    let truth_path = args.out.join("truth.tsv");
    let mut dump = Vec::new();
    truth.write_dump(&mut dump).map_err(|e| Error::io(&truth_path, e))?;
    std::fs::write(&truth_path, dump).map_err(|e| Error::io(&truth_path, e))?;
    let _ = writeln!(out, "wrote {} rows to {}", data.len(), args.out.display());
    Ok(0)
}

fn verify(out: &mut dyn Write) -> Result<i32, Failure> {
    let report = verification_suite()?;
    let _ = write!(out, "{report}");
    Ok(if report.all_passed() { 0 } else { 1 })
}

/// Runs the command line `argv` (program name first), writing normal output
/// to `out` and diagnostics to `err`. Returns 0 on success, 1 if a run or
/// check failed and 2 for usage errors.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    let (name, outcome) = match &cli.command {
        Command::Train(args) => ("train", train(args, out)),
        Command::Sweep(args) => ("sweep", sweep(args, out)),
        Command::Verify => ("verify", verify(out)),
        Command::Synth(args) => ("synth", synth(args, out)),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let mut cmd = Cli::command();
            let usage = cmd.find_subcommand_mut(name).map(|c| c.render_usage().to_string()).unwrap_or_default();
            let _ = writeln!(err, "error: {msg}\n\n{usage}\n\nFor more information, try 'gce {name} --help'.");
            2
        }
        Err(Failure::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// [`run_cli`] on the process's standard streams.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    run_cli(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
