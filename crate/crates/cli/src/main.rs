//! `movingout`: collect demonstrations, augment them, train policies and
//! dynamics models, evaluate, replay logs and host live play.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use movingout::bass::DEFAULT_SIGMA;
use movingout::env::ObsMode;
use movingout::metrics::AcDenominator;
use movingout::Error;

pub const TOOL_VERSION: &str = concat!("movingout-cli ", env!("CARGO_PKG_VERSION"));

#[derive(Parser)]
#[command(name = "movingout", version, about = "Two-agent cooperative transport: data, training, evaluation and live play")]
struct Cli {
    /// Root for default input and output paths.
    #[arg(long, env = "MOVINGOUT_DATA_DIR", default_value = "data", global = true)]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scripted (or trained) policy pairs and store their trajectories.
    Collect(CollectArgs),
    /// Perturb and recombine stored trajectories.
    Augment(AugmentArgs),
    /// Train a cloned policy or a dynamics model.
    Train(TrainArgs),
    /// Evaluate a policy pair on catalog maps.
    Eval(EvalArgs),
    /// Re-simulate stored trajectories.
    Replay(ReplayArgs),
    /// Host live sessions for the web client.
    Play(PlayArgs),
    /// List the built-in maps.
    MapList(MapListArgs),
}

#[derive(Args, Clone)]
pub struct EpisodeArgs {
    /// Map ids or map files, comma separated, or `all`.
    #[arg(long, default_value = "all")]
    pub maps: String,
    /// Number of seeds per map.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    /// Policy for agent i: `scripted-greedy`, `scripted-helper`, a spec file or a net file.
    #[arg(long, default_value = "scripted-greedy")]
    pub policy: String,
    /// Policy for agent j.
    #[arg(long, default_value = "scripted-helper")]
    pub partner: String,
    /// Heading noise (radians) for scripted policies.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = movingout::env::DEFAULT_HORIZON)]
    pub horizon: usize,
    /// Denominator of action consistency.
    #[arg(long, value_enum, default_value_t = AcChoice::Joint)]
    pub ac_denominator: AcChoice,
}

#[derive(Args)]
pub struct CollectArgs {
    #[command(flatten)]
    pub episodes: EpisodeArgs,
    /// Output directory (default: <data-dir>/trajectories).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AugmentArgs {
    /// Input directory (default: <data-dir>/trajectories).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory (default: <data-dir>/augmented).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Std of the partner position perturbation; 0 skips perturbation.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Perturb the partner heading too (same std, in radians).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub perturb_heading: bool,
    /// Drop generated trajectories that leave the arena or penetrate geometry.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub validate_augment: bool,
    /// Cap on splices per trajectory pair, earliest first.
    #[arg(long, default_value_t = 4)]
    pub max_splices_per_pair: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainKind {
    Bc,
    Dynamics,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObsChoice {
    SingleMap,
    MultiMap,
}

impl From<ObsChoice> for ObsMode {
    fn from(c: ObsChoice) -> ObsMode {
        match c {
            ObsChoice::SingleMap => ObsMode::SingleMap,
            ObsChoice::MultiMap => ObsMode::MultiMap,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AcChoice {
    Joint,
    Total,
}

impl From<AcChoice> for AcDenominator {
    fn from(c: AcChoice) -> AcDenominator {
        match c {
            AcChoice::Joint => AcDenominator::Joint,
            AcChoice::Total => AcDenominator::Total,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub kind: TrainKind,
    /// Trajectory directory (default: <data-dir>/trajectories).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model file (default: <data-dir>/models/<kind>.mnn).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ObsChoice::SingleMap)]
    pub obs_mode: ObsChoice,
    /// Hidden width of the cloned policy.
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    /// Actions predicted per step by the cloned policy (1 or 8).
    #[arg(long, default_value_t = 1)]
    pub action_horizon: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of episodes held out for a one-step error report (dynamics).
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Raw,
    /// Candidate selection; the learned model unless `--oracle` is set.
    Bass,
    BassModel,
    BassOracle,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub episodes: EpisodeArgs,
    /// Execution modes, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "raw")]
    pub mode: Vec<ModeChoice>,
    /// Score candidates with the physics step instead of the learned model.
    #[arg(long)]
    pub oracle: bool,
    /// Candidates per selection step.
    #[arg(long, default_value_t = 8)]
    pub n_candidates: usize,
    /// Dynamics model for bass-model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON report path; the text table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReplayArgs {
    /// Trajectory files or directories.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Verify that re-simulation reproduces every stored state bit-exactly.
    #[arg(long)]
    pub check: bool,
}

#[derive(Args)]
pub struct PlayArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, default_value_t = movingout_server::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value_t = 8)]
    pub max_sessions: usize,
    /// Built web client served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Session logs (default: <data-dir>/sessions).
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    /// Tick period in milliseconds.
    #[arg(long, default_value_t = 100)]
    pub tick_ms: u64,
}

#[derive(Args)]
pub struct MapListArgs {
    /// Print full map specs as JSON lines.
    #[arg(long)]
    pub json: bool,
}

/// Bad flag values that clap cannot catch on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::ReplayDivergence { .. }) => 4,
        Some(
            Error::MapValidation(_)
            | Error::InvalidAction(_)
            | Error::Decode(_)
            | Error::ExhaustedSampling { .. }
            | Error::ShapeMismatch { .. }
            | Error::LayoutMismatch { .. }
            | Error::WidthMismatch { .. }
            | Error::SchemaVersion { .. }
            | Error::Parse { .. }
            | Error::ModelFormat(_)
            | Error::PolicySpec(_)
            | Error::InfeasibleSplit(_)
            | Error::EmptyDataset
            | Error::DegenerateEpisode,
        ) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let data = cli.data_dir;
    let result = match cli.command {
        Command::Collect(a) => commands::collect(&data, a),
        Command::Augment(a) => commands::augment(&data, a),
        Command::Train(a) => commands::train(&data, a),
        Command::Eval(a) => commands::eval(a),
        Command::Replay(a) => commands::replay(a),
        Command::Play(a) => commands::play(&data, a),
        Command::MapList(a) => commands::map_list(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
