//! Command-line front end: `train`, `bench` and `eval`.
//!
//! Results go to the `out` writer (stdout in the binary), progress to `err`.
//! Exit codes: 0 success, 2 usage, 3 I/O or format error, 4 shape/internal error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::mnist::{MnistError, MnistSet};
use crate::network::{self, CheckpointError, Hyper, Params};
use crate::runtime::{self, ExecConfig, MT_ENV};
use crate::tensor::TensorError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "tensorloom",
    version,
    about = "Train and benchmark a from-scratch MNIST CNN"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the training set and report test accuracy.
    Train(TrainArgs),
    /// Time the training workload for several worker counts; CSV on stdout.
    Bench(BenchArgs),
    /// Evaluate a saved checkpoint on the test set.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub train_images: PathBuf,
    #[arg(long)]
    pub train_labels: PathBuf,
    #[arg(long)]
    pub test_images: PathBuf,
    #[arg(long)]
    pub test_labels: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub limit_train: usize,
    #[arg(long, default_value_t = 10_000)]
    pub limit_test: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 0.05, value_parser = parse_rate)]
    pub rate: f32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Worker threads for comprehensions.
    #[arg(long, env = MT_ENV, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub mt: u64,
    /// Write the trained parameters here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Comma-separated worker counts to time.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8",
          value_parser = clap::value_parser!(u64).range(1..))]
    pub bench_workers: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test_images: PathBuf,
    #[arg(long)]
    pub test_labels: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub limit_test: usize,
    #[arg(long, env = MT_ENV, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub mt: u64,
}

fn parse_rate(s: &str) -> Result<f32, String> {
    let r: f32 = s.parse().map_err(|e| format!("{e}"))?;
    if r.is_finite() && r > 0.0 {
        Ok(r)
    } else {
        Err("rate must be a positive number".into())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] MnistError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("shape error: {0}")]
    Shape(#[from] TensorError),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) | CliError::Checkpoint(_) | CliError::Output(_) => EXIT_DATA,
            CliError::Shape(_) | CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                EXIT_USAGE
            } else {
                let _ = write!(out, "{}", e.render());
                EXIT_OK
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, out, err),
        Command::Bench(a) => cmd_bench(&a, out, err),
        Command::Eval(a) => cmd_eval(&a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn hyper(opts: &TrainOpts) -> Hyper {
    Hyper {
        rate: opts.rate,
        epochs: opts.epochs,
        batch: opts.batch as usize,
        seed: opts.seed,
    }
}

/// Outcome of one load + train + evaluate run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub params: Params,
    pub epoch_losses: Vec<f32>,
    pub accuracy: f64,
    pub seconds: f64,
}

/// The whole application workload, timed end to end.
pub fn run_workload(
    data: &DataArgs,
    h: &Hyper,
    workers: usize,
    mut on_epoch: impl FnMut(usize, f32),
) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    runtime::with_config(ExecConfig::new(workers), || {
        let train = MnistSet::from_files(
            &data.train_images,
            &data.train_labels,
            Some(data.limit_train),
        )?;
        let test =
            MnistSet::from_files(&data.test_images, &data.test_labels, Some(data.limit_test))?;
        if train.is_empty() || test.is_empty() {
            return Err(CliError::Internal(
                "training and test sets must be nonempty".into(),
            ));
        }
        let init = Params::init(h.seed);
        let report = network::train(&init, &train, h, &mut on_epoch)?;
        let accuracy = network::evaluate(&report.params, &test)?;
        Ok(RunOutcome {
            params: report.params,
            epoch_losses: report.epoch_losses,
            accuracy,
            seconds: start.elapsed().as_secs_f64(),
        })
    })
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let h = hyper(&a.opts);
    let _ = writeln!(
        err,
        "training: epochs={} batch={} rate={} seed={} mt={}",
        h.epochs, h.batch, h.rate, h.seed, a.mt
    );
    let mut lines = Vec::new();
    let outcome = run_workload(&a.data, &h, a.mt as usize, |epoch, loss| {
        let _ = writeln!(err, "epoch {} done", epoch + 1);
        lines.push(format!("epoch {} mean_loss {loss:.6}", epoch + 1));
    })?;
    for l in lines {
        writeln!(out, "{l}")?;
    }
    writeln!(out, "accuracy {:.4}", outcome.accuracy)?;
    writeln!(out, "seconds {:.3}", outcome.seconds)?;
    if let Some(path) = &a.checkpoint {
        outcome.params.save(path)?;
        let _ = writeln!(err, "checkpoint written to {}", path.display());
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let h = hyper(&a.opts);
    let mut rows: Vec<(u64, RunOutcome)> = Vec::new();
    for &w in &a.bench_workers {
        let _ = writeln!(err, "bench: workers={w}");
        let outcome = run_workload(&a.data, &h, w as usize, |_, _| {})?;
        rows.push((w, outcome));
    }
    let baseline = match rows.iter().find(|(w, _)| *w == 1) {
        Some((_, o)) => o.seconds,
        None => {
            let _ = writeln!(err, "bench: timing single-worker baseline");
            run_workload(&a.data, &h, 1, |_, _| {})?.seconds
        }
    };
    writeln!(out, "workers,seconds,speedup_vs_1")?;
    for (w, o) in &rows {
        writeln!(out, "{w},{:.3},{:.3}", o.seconds, baseline / o.seconds)?;
    }
    if let Some((_, first)) = rows.first() {
        if let Some((w, _)) = rows.iter().find(|(_, o)| !o.params.bit_eq(&first.params)) {
            return Err(CliError::Internal(format!(
                "parameters trained with {w} workers differ from the first row"
            )));
        }
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write, _err: &mut dyn Write) -> Result<(), CliError> {
    let params = Params::load(&a.checkpoint)?;
    let test = MnistSet::from_files(&a.test_images, &a.test_labels, Some(a.limit_test))?;
    if test.is_empty() {
        return Err(CliError::Internal("test set is empty".into()));
    }
    let accuracy = runtime::with_config(ExecConfig::new(a.mt as usize), || {
        network::evaluate(&params, &test)
    })?;
    writeln!(out, "accuracy {accuracy:.4}")?;
    Ok(())
}
