use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "upms", version, about = "Parallel machine scheduling with setup times and workers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random instance and write it to disk.
    Generate(GenerateArgs),
    /// Train a policy and write its checkpoint, curve and logs.
    Train(TrainArgs),
    /// Evaluate a baseline or a checkpoint and append a summary row.
    Evaluate(EvaluateArgs),
    /// Solve a tiny instance exactly.
    SolveExact(SolveArgs),
    /// Re-run a recorded command from its manifest.
    Replay(ReplayArgs),
}

/// Instance-generator overrides. Unset fields keep the base configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct GeneratorArgs {
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub machines: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub pt_min: Option<u64>,
    #[arg(long)]
    pub pt_max: Option<u64>,
    #[arg(long)]
    pub st_min: Option<u64>,
    #[arg(long)]
    pub st_max: Option<u64>,
    /// Fewest workers a job may require.
    #[arg(long)]
    pub r_min: Option<u64>,
    #[arg(long)]
    pub r_max: Option<u64>,
    /// Probability that a job can run on a machine.
    #[arg(long)]
    pub eligibility: Option<f64>,
    /// Probability that a worker can operate a machine.
    #[arg(long)]
    pub compatibility: Option<f64>,
}

impl GeneratorArgs {
    pub fn any_set(&self) -> bool {
        self.jobs.is_some()
            || self.machines.is_some()
            || self.workers.is_some()
            || self.pt_min.is_some()
            || self.pt_max.is_some()
            || self.st_min.is_some()
            || self.st_max.is_some()
            || self.r_min.is_some()
            || self.r_max.is_some()
            || self.eligibility.is_some()
            || self.compatibility.is_some()
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EnvArgs {
    /// Job-slot size.
    #[arg(long)]
    pub slot: Option<usize>,
    /// Decision-step limit per episode (default 50 per job).
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub inaction_threshold: Option<u32>,
    /// Divisor for time-valued observation features.
    #[arg(long)]
    pub time_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Library defaults.
    Standard,
    /// Tuned for the 10-job desk-scale scenario.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Allocation {
    Random,
    Greedy,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Job-slot size recorded in the generator configuration.
    #[arg(long)]
    pub slot: Option<usize>,
    /// Start from the 10-job desk-scale configuration instead of the 30-job one.
    #[arg(long)]
    pub desk: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the output path with a `.manifest.json` suffix.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// One of dqn, ppo, maskable-ppo, mappo.
    #[arg(long)]
    pub algo: String,
    /// Train on this instance file; otherwise a fresh desk-scale instance per episode.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, default_value_t = 200_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "run")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub rollout: Option<usize>,
    #[arg(long)]
    pub num_envs: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub gae_lambda: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub entropy: Option<f64>,
    #[arg(long)]
    pub value_coef: Option<f64>,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub eval_cadence: Option<usize>,
    #[arg(long)]
    pub reward_window: Option<usize>,
    /// Apply per-agent masks to the MAPPO actor.
    #[arg(long)]
    pub mappo_masked: bool,
    /// Crew selection in the single-agent environment.
    #[arg(long, value_enum)]
    pub worker_allocation: Option<Allocation>,
    #[arg(long)]
    pub replay_capacity: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub target_sync: Option<usize>,
    #[arg(long)]
    pub exploration_fraction: Option<f64>,
    #[arg(long)]
    pub train_frequency: Option<usize>,
    #[arg(long)]
    pub learning_starts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Baseline policy: random, random-masked or greedy.
    #[arg(long, conflicts_with = "checkpoint")]
    pub policy: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate baselines in the per-machine multi-agent environment.
    #[arg(long)]
    pub multi: bool,
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Makespan,
    TotalCompletion,
    /// Weighted objective w1·T + w2·U − w3·P.
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    Makespan,
    TotalCompletion,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, conflicts_with = "golden")]
    pub instance: Option<PathBuf>,
    /// Use the built-in two-machine example.
    #[arg(long)]
    pub golden: bool,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Makespan)]
    pub objective: ObjectiveArg,
    /// Time term used by `--objective f`.
    #[arg(long, value_enum, default_value_t = MeasureArg::Makespan)]
    pub measure: MeasureArg,
    /// `w1,w2,w3` for `--objective f`.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    pub weights: Vec<f64>,
    #[arg(long)]
    pub gantt: Option<PathBuf>,
    /// Defaults to the Gantt path with a `.manifest.json` suffix.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory that receives the re-created artifacts.
    #[arg(long)]
    pub out_dir: PathBuf,
}
