use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use super::{InstanceSource, JointPolicy, Policy, TrainError};
use crate::env::{Action, Env, EnvConfig};
use crate::metrics::{ObjectiveWeights, ScheduleRecord};
use crate::multi_env::MultiEnv;
use crate::{par, seed};

pub const SUMMARY_HEADER: &str =
    "policy,episodes,seed,mean_reward,std_reward,mean_objective,completion_rate,mean_makespan,mean_steps";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub reward: f64,
    pub steps: usize,
    pub terminated: bool,
    pub schedule: ScheduleRecord,
}

impl EpisodeResult {
    pub fn objective(&self) -> f64 {
        self.schedule.objective(&ObjectiveWeights::default())
    }
}

/// Plays one episode from the environment's current state to its end.
pub fn run_episode<P: Policy + ?Sized>(env: &mut Env, policy: &mut P) -> Result<EpisodeResult, TrainError> {
    let mut reward = 0.0;
    let mut steps = 0;
    while !env.is_done() {
        let a = policy.act(env);
        reward += env.step(Action(a))?.reward;
        steps += 1;
    }
    Ok(EpisodeResult {
        reward,
        steps,
        terminated: env.state().terminated,
        schedule: env.state().schedule.clone(),
    })
}

/// Joint counterpart of [`run_episode`]; the reward is summed over agents.
pub fn run_joint_episode<P: JointPolicy + ?Sized>(env: &mut MultiEnv, policy: &mut P) -> Result<EpisodeResult, TrainError> {
    let mut reward = 0.0;
    let mut steps = 0;
    while !env.is_done() {
        let actions = policy.act_joint(env);
        reward += env.joint_step(&actions)?.total_reward();
        steps += 1;
    }
    Ok(EpisodeResult {
        reward,
        steps,
        terminated: env.state().terminated,
        schedule: env.state().schedule.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub policy: String,
    pub episodes: usize,
    pub seed: u64,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_objective: f64,
    pub completion_rate: f64,
    pub mean_makespan: f64,
    pub mean_steps: f64,
}

impl EvalSummary {
    fn from_results(policy: &str, seed: u64, results: &[EpisodeResult]) -> Self {
        let n = results.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeResult) -> f64| results.iter().map(f).sum::<f64>() / n;
        let mean_reward = mean(&|r| r.reward);
        EvalSummary {
            policy: policy.to_string(),
            episodes: results.len(),
            seed,
            mean_reward,
            std_reward: mean(&|r| (r.reward - mean_reward).powi(2)).sqrt(),
            mean_objective: mean(&|r| r.objective()),
            completion_rate: mean(&|r| f64::from(u8::from(r.terminated))),
            mean_makespan: mean(&|r| r.schedule.makespan() as f64),
            mean_steps: mean(&|r| r.steps as f64),
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.episodes,
            self.seed,
            self.mean_reward,
            self.std_reward,
            self.mean_objective,
            self.completion_rate,
            self.mean_makespan,
            self.mean_steps
        )
    }
}

/// Appends a summary row, writing the header first if the file is new or empty.
pub fn append_summary(path: impl AsRef<Path>, summary: &EvalSummary) -> std::io::Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{SUMMARY_HEADER}")?;
    }
    writeln!(f, "{}", summary.to_csv_row())
}

struct EpisodeSeeds {
    instances: u64,
    env: u64,
    policy: u64,
}

impl EpisodeSeeds {
    fn new(seed: u64) -> Self {
        EpisodeSeeds {
            instances: seed::derive(seed, "eval-instances"),
            env: seed::derive(seed, "eval-env"),
            policy: seed::derive(seed, "eval-policy"),
        }
    }
}

/// Runs `episodes` independent episodes with fixed per-episode seeds, in
/// parallel when enabled. `make_policy` receives the per-episode policy seed.
pub fn evaluate_policy<P, F>(
    label: &str,
    source: &InstanceSource,
    env_cfg: &EnvConfig,
    make_policy: F,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary, TrainError>
where
    P: Policy,
    F: Fn(u64) -> P + Sync + Send,
{
    let seeds = EpisodeSeeds::new(seed);
    let results = par::map_range(episodes, |i| -> Result<EpisodeResult, TrainError> {
        let i = i as u64;
        let instance = source.instance(seeds.instances, i)?;
        let mut env = Env::new(instance, env_cfg.clone().with_seed(seed::nth(seeds.env, i)))?;
        let mut policy = make_policy(seed::nth(seeds.policy, i));
        run_episode(&mut env, &mut policy)
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(EvalSummary::from_results(label, seed, &results))
}

/// Multi-agent counterpart of [`evaluate_policy`].
pub fn evaluate_joint_policy<P, F>(
    label: &str,
    source: &InstanceSource,
    env_cfg: &EnvConfig,
    make_policy: F,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary, TrainError>
where
    P: JointPolicy,
    F: Fn(u64) -> P + Sync + Send,
{
    let seeds = EpisodeSeeds::new(seed);
    let results = par::map_range(episodes, |i| -> Result<EpisodeResult, TrainError> {
        let i = i as u64;
        let instance = source.instance(seeds.instances, i)?;
        let mut env = MultiEnv::new(instance, env_cfg.clone().with_seed(seed::nth(seeds.env, i)))?;
        let mut policy = make_policy(seed::nth(seeds.policy, i));
        run_joint_episode(&mut env, &mut policy)
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(EvalSummary::from_results(label, seed, &results))
}
