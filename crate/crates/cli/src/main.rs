mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use del_core::synth::Preset;

/// Learn expert-rule thresholds from noisy sequence data.
#[derive(Debug, Parser)]
#[command(name = "del", version, about)]
struct Cli {
    /// Worker threads for search and evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Gen,
    Spe,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Gen => Preset::Gen,
            PresetArg::Spe => Preset::Spe,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted rules.
    GenData(GenDataArgs),
    /// Train a model and write snapshots plus a metrics log.
    Train(TrainArgs),
    /// Evaluate a snapshot on a dataset.
    Eval(EvalArgs),
    /// Closed and open tests of the model and the raw-rule baseline on two datasets.
    Protocol(ProtocolArgs),
    /// Show how a snapshot classifies one sample.
    Explain(ExplainArgs),
    /// Classify with the rule file's own thresholds (baseline).
    Br(BrArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "gen")]
    pub preset: PresetArg,
    /// Number of samples (defaults to the preset's size).
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML or JSON file; its `[generator]` table overrides preset fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Replace an output directory written by an earlier run.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    /// TOML or JSON file; its `[train]` table overrides the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accuracy gate preset for model selection (gen: 0.925, spe: 0.5).
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Short schedule (200 + 2800 steps) for quick experiments.
    #[arg(long)]
    pub desk_scale: bool,
    /// Independent training runs; the best one is reported.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Train without the data assessing model (masks stay all-ones).
    #[arg(long)]
    pub no_assess: bool,
    /// Drop the critical-feature term from the rule loss.
    #[arg(long)]
    pub no_critical_loss: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset: a `.jsonl` file or a directory containing `data.jsonl`.
    #[arg(long)]
    pub data: PathBuf,
    /// Rule file (defaults to `rules.del` next to the dataset).
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Also log every mask search to `search_trace.jsonl`.
    #[arg(long)]
    pub trace_search: bool,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Accuracy gate (defaults to the snapshot's).
    #[arg(long)]
    pub acc_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// First dataset (general population).
    #[arg(long)]
    pub a: PathBuf,
    /// Second dataset (special population).
    #[arg(long)]
    pub b: PathBuf,
    /// Rule file (defaults to `rules.del` next to the first dataset).
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value_t = del_core::trainer::ACC_THRESHOLD_GENERAL)]
    pub a_acc_threshold: f64,
    #[arg(long, default_value_t = del_core::trainer::ACC_THRESHOLD_SPECIAL)]
    pub b_acc_threshold: f64,
    /// Directory for `report.json` and a manifest.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Zero-based sample index in the dataset.
    #[arg(long)]
    pub sample: usize,
}

#[derive(Debug, Args)]
pub struct BrArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value_t = del_core::trainer::ACC_THRESHOLD_GENERAL)]
    pub acc_threshold: f64,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        anyhow::ensure!(n > 0, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a, cli.json),
        Command::Train(a) => commands::train(&a, cli.json),
        Command::Eval(a) => commands::eval(&a, cli.json),
        Command::Protocol(a) => commands::protocol(&a, cli.json),
        Command::Explain(a) => commands::explain(&a, cli.json),
        Command::Br(a) => commands::br(&a, cli.json),
    }
}

/// Exit quietly when stdout is closed early (`del eval ... | head`).
#[cfg(unix)]
fn default_sigpipe() {
    // SAFETY: called once at startup before any threads exist.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn default_sigpipe() {}

fn main() -> ExitCode {
    default_sigpipe();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEL_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
