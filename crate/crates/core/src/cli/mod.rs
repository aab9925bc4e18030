//! The `defuzz` command line.

mod commands;
mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use commands::{campaign_config, load_program, predict_targets, read_seed_dir, triage_table};
pub use report::{relative_speeds, report_tables, Table};

use crate::fuzz::{Clock, Mode};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

pub(crate) fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "defuzz", version, about = "Attention-guided directed greybox fuzzing for micro-target programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Resolve targets and dump function and block distances.
    Analyze(AnalyzeArgs),
    /// Train the vulnerability predictor on a JSON-lines corpus.
    PredictTrain(TrainArgs),
    /// Predict target lines for a program with a trained model.
    Predict(PredictArgs),
    /// Run a fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Count unique bugs per campaign directory.
    Triage(TriageArgs),
    /// Compare campaign directories: speed, paths, crashes, first crash.
    Report(ReportArgs),
    /// Write the bundled fixtures and predictor corpus.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long, default_value_t = crate::distance::DEFAULT_RADIUS)]
    pub radius: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Micro-target program, or a single C-like function.
    #[arg(long)]
    pub program: PathBuf,
    /// Target spec to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the attention reports; defaults next to `--out`.
    #[arg(long)]
    pub reports: Option<PathBuf>,
    #[arg(long, default_value_t = crate::predictor::DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, default_value_t = crate::predictor::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockArg {
    Virtual,
    Wall,
}

impl From<ClockArg> for Clock {
    fn from(c: ClockArg) -> Clock {
        match c {
            ClockArg::Virtual => Clock::Virtual,
            ClockArg::Wall => Clock::Wall,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FuzzArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Directed)]
    pub mode: Mode,
    /// Campaign length in seconds.
    #[arg(long, default_value_t = 3600.0)]
    pub timeout: f64,
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Directory of initial inputs; a single empty input when absent.
    #[arg(long)]
    pub seed_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    #[arg(long, default_value_t = crate::distance::DEFAULT_RADIUS)]
    pub radius: u32,
    #[arg(long)]
    pub max_execs: Option<u64>,
    #[arg(long, default_value_t = crate::vm::DEFAULT_STEP_LIMIT)]
    pub step_limit: u64,
    #[arg(long, value_enum, default_value_t = ClockArg::Virtual)]
    pub clock: ClockArg,
    /// Skip the deterministic mutation stages.
    #[arg(long)]
    pub no_deterministic: bool,
    #[arg(long)]
    pub exit_on_fault: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TriageArgs {
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Directory for bugs.csv and bugs.txt; stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Campaign directories, compared in order. Labels default to the
    /// directory names.
    #[arg(required = true, num_args = 2..)]
    pub dirs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything needed to repeat a run. Written before any other output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub rng_seeds: Vec<u64>,
}

impl RunManifest {
    pub fn new(command: &Command) -> Self {
        let value = serde_json::to_value(command).expect("arguments serialize");
        let (name, config) = match value {
            serde_json::Value::Object(m) => m.into_iter().next().expect("one variant"),
            other => (String::new(), other),
        };
        let (inputs, outputs, rng_seeds) = match command {
            Command::Analyze(a) => (vec![a.program.clone(), a.targets.clone()], vec![a.out.clone()], vec![]),
            Command::PredictTrain(a) => (vec![a.corpus.clone()], vec![a.out.clone()], vec![a.rng_seed]),
            Command::Predict(a) => {
                (vec![a.model.clone(), a.program.clone()], vec![a.out.clone(), reports_path(a)], vec![])
            }
            Command::Fuzz(a) => {
                let mut inputs = vec![a.program.clone()];
                inputs.extend(a.targets.clone());
                inputs.extend(a.seed_dir.clone());
                (inputs, vec![a.out.clone()], vec![a.rng_seed])
            }
            Command::Triage(a) => (a.dirs.clone(), a.out.iter().cloned().collect(), vec![]),
            Command::Report(a) => (a.dirs.clone(), vec![a.out.clone()], vec![]),
            Command::GenCorpus(a) => (vec![], vec![a.out.clone()], vec![crate::bench::CORPUS_SEED]),
        };
        RunManifest { tool_version: env!("CARGO_PKG_VERSION").into(), command: name, config, inputs, outputs, rng_seeds }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(data(parent.display()))?;
        }
        let json = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(path, json).map_err(data(path.display()))
    }
}

pub(crate) fn reports_path(a: &PredictArgs) -> PathBuf {
    a.reports.clone().unwrap_or_else(|| sibling(&a.out, "attention.json"))
}

/// `path` with `suffix` appended to its file name.
pub(crate) fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

/// Where the manifest of `command` goes.
pub fn manifest_path(command: &Command) -> Option<PathBuf> {
    match command {
        Command::Analyze(a) => Some(a.out.join("manifest.json")),
        Command::Fuzz(a) => Some(a.out.join("manifest.json")),
        Command::Report(a) => Some(a.out.join("manifest.json")),
        Command::GenCorpus(a) => Some(a.out.join("manifest.json")),
        Command::Triage(a) => a.out.as_ref().map(|o| o.join("manifest.json")),
        Command::PredictTrain(a) => Some(sibling(&a.out, "manifest.json")),
        Command::Predict(a) => Some(sibling(&a.out, "manifest.json")),
    }
}

/// Validates, writes the manifest, then runs the command. Human-readable
/// results go to `stdout`.
pub fn run(command: &Command, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    commands::validate(command)?;
    if let Some(path) = manifest_path(command) {
        RunManifest::new(command).write(&path)?;
    }
    match command {
        Command::Analyze(a) => commands::analyze(a, stdout),
        Command::PredictTrain(a) => commands::predict_train(a, stdout),
        Command::Predict(a) => commands::predict(a, stdout),
        Command::Fuzz(a) => commands::fuzz(a, stdout),
        Command::Triage(a) => commands::triage(a, stdout),
        Command::Report(a) => commands::report(a, stdout),
        Command::GenCorpus(a) => commands::gen_corpus(a, stdout),
    }
}
