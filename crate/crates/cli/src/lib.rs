//! The `fill` command line: tuning, imputation, leave-one-out evaluation,
//! explanations, the logistic baseline, and synthetic cohorts.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 no feasible grid cell
//! (the tuning report is still written).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_grid, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] fill_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Parser)]
#[command(name = "fill", version, about = "Neighborhood-based label imputation")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grid-search radius and p-value threshold by leave-one-out evaluation.
    Tune,
    /// Classify UNKNOWN records at a fixed radius and threshold.
    Impute,
    /// Leave-one-out metrics at a fixed radius and threshold.
    Loo,
    /// Contrast features of each record's neighborhood with the rest.
    Explain {
        /// Record ids to explain.
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Fit and evaluate the logistic regression baseline.
    Baseline,
    /// Write a synthetic cohort, its schema, and the hidden labels.
    Synth,
}

#[derive(Debug, Args)]
struct Flags {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cohort CSV.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Schema file with `id`, `label`, `binary`, `continuous` keys.
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// Comma-separated subset of schema features to use.
    #[arg(long, global = true)]
    features: Option<String>,
    /// jaccard, manhattan or gower (default: gower with continuous features, else jaccard).
    #[arg(long, global = true)]
    metric: Option<String>,
    /// a: max precision with at least --min-tp TPs; b: max TPs with precision at least --min-precision.
    #[arg(long, global = true)]
    criterion: Option<String>,
    #[arg(long, global = true)]
    min_precision: Option<f64>,
    #[arg(long, global = true)]
    min_tp: Option<usize>,
    /// Neighborhood radius S.
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Significance threshold T.
    #[arg(long, global = true)]
    pvalue: Option<f64>,
    /// Comma-separated radius grid (default: quantiles of labeled-pair distances).
    #[arg(long, global = true)]
    s_grid: Option<String>,
    /// Comma-separated threshold grid.
    #[arg(long, global = true)]
    t_grid: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Features per row of the top-features table.
    #[arg(long, global = true)]
    top: Option<usize>,
    /// Synthetic cohort design: overlapping or separated.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    n_labeled: Option<usize>,
    #[arg(long, global = true)]
    n_unlabeled: Option<usize>,
}

impl Flags {
    fn settings(&self) -> Result<Settings, CliError> {
        let grid = |key: &str, v: &Option<String>| v.as_deref().map(|v| parse_grid(key, v)).transpose();
        let from_flags = Settings {
            input: self.input.clone(),
            schema: self.schema.clone(),
            features: self.features.as_deref().map(config::split_list),
            metric: self.metric.clone(),
            criterion: self.criterion.clone(),
            min_precision: self.min_precision,
            min_tp: self.min_tp,
            radius: self.radius,
            pvalue: self.pvalue,
            s_grid: grid("s_grid", &self.s_grid)?,
            t_grid: grid("t_grid", &self.t_grid)?,
            seed: self.seed,
            out: self.out.clone(),
            threads: self.threads,
            top: self.top,
            preset: self.preset.clone(),
            n_labeled: self.n_labeled,
            n_unlabeled: self.n_unlabeled,
        };
        let from_file = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        Ok(from_file.overridden_by(from_flags))
    }
}

fn execute(command: &Command, settings: &Settings) -> Result<commands::Outcome, CliError> {
    match command {
        Command::Tune => commands::tune(settings),
        Command::Impute => commands::impute(settings),
        Command::Loo => commands::loo(settings),
        Command::Explain { ids } => commands::explain(settings, ids),
        Command::Baseline => commands::baseline(settings),
        Command::Synth => commands::synth(settings),
    }
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    Ok(f())
}

fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })?;
    }
    Ok(())
}

fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Core(fill_core::Error::NoFeasibleCell { .. }) => 2,
        _ => 1,
    }
}

fn try_run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let settings = cli.flags.settings()?;
    if settings.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    #[cfg(not(feature = "parallel"))]
    if settings.threads.is_some() {
        let _ = writeln!(stderr, "warning: built without parallel support; --threads ignored");
    }
    let command = &cli.command;
    let outcome = with_threads(settings.threads, || execute(command, &settings))??;
    for w in &outcome.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let dir = settings.out.clone().unwrap_or_else(|| PathBuf::from("."));
    write_outputs(&dir, &outcome.files)?;
    for m in &outcome.messages {
        let _ = writeln!(stdout, "{m}");
    }
    Ok(outcome.exit_code)
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match try_run(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}
