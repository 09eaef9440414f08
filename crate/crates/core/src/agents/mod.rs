//! Policies and trainers.
//!
//! Baselines ([`RandomPolicy`], [`GreedyPolicy`]) need no training. The
//! trainers ([`dqn_train`], [`ppo_train`], [`mappo_train`]) all share
//! [`TrainConfig`], draw episodes from an [`InstanceSource`] and report a
//! [`TrainingCurve`] with one row per evaluation window.

mod baselines;
mod buffers;
mod curve;
mod distribution;
mod dqn;
mod evaluate;
mod mappo;
mod ppo;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use baselines::{greedy_choice, GreedyPolicy, RandomPolicy};
pub use buffers::{compute_gae, normalize, ReplayBuffer, RolloutBuffer, Transition};
pub use curve::{CurveRow, EpisodeRecord, TrainingCurve, CURVE_HEADER};
pub use distribution::{clipped_surrogate, masked_log_softmax, Categorical};
pub use dqn::{dqn_train, epsilon_greedy};
pub use evaluate::{
    append_summary, evaluate_joint_policy, evaluate_policy, run_episode, run_joint_episode, EpisodeResult, EvalSummary,
    SUMMARY_HEADER,
};
pub use mappo::{mappo_train, ActorJointPolicy};
pub use ppo::{ppo_train, ActorPolicy};

use crate::env::{Env, EnvError};
use crate::instance::{generate, GeneratorConfig, InstanceError, ProblemInstance};
use crate::multi_env::MultiEnv;
use crate::nn::{DenseNet, NnError};
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged in {algorithm} at update {update}: {detail}")]
    Divergence {
        algorithm: &'static str,
        update: usize,
        detail: String,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dqn,
    Ppo,
    MaskablePpo,
    Mappo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Dqn, Algorithm::Ppo, Algorithm::MaskablePpo, Algorithm::Mappo];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ppo => "ppo",
            Algorithm::MaskablePpo => "maskable-ppo",
            Algorithm::Mappo => "mappo",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn is_multi_agent(self) -> bool {
        self == Algorithm::Mappo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_timesteps: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub rollout_length: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    /// Parallel rollout environments for the on-policy trainers.
    pub num_envs: usize,
    pub replay_capacity: usize,
    pub dqn_batch_size: usize,
    /// Gradient updates between target-network copies.
    pub target_sync_period: usize,
    pub exploration_initial: f64,
    pub exploration_final: f64,
    /// Fraction of training over which ε decays linearly.
    pub exploration_fraction: f64,
    /// Environment steps between DQN updates.
    pub dqn_train_frequency: usize,
    pub dqn_learning_starts: usize,
    pub dqn_max_grad_norm: f64,
    /// Apply per-agent masks to the shared MAPPO actor.
    pub mappo_masked: bool,
    /// Timesteps per curve row.
    pub eval_cadence: usize,
    /// Episodes in the moving reward window.
    pub reward_window: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_timesteps: 200_000,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epochs: 4,
            rollout_length: 2048,
            minibatch_size: 256,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            num_envs: 1,
            replay_capacity: 100_000,
            dqn_batch_size: 64,
            target_sync_period: 1000,
            exploration_initial: 1.0,
            exploration_final: 0.05,
            exploration_fraction: 0.2,
            dqn_train_frequency: 4,
            dqn_learning_starts: 1000,
            dqn_max_grad_norm: 10.0,
            mappo_masked: false,
            eval_cadence: 10_000,
            reward_window: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Faster-learning settings for 200k-step runs on desk-scale instances:
    /// a larger step size, more epochs, smaller minibatches and a weaker
    /// entropy bonus.
    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            minibatch_size: 64,
            entropy_coef: 0.001,
            ..TrainConfig::default()
        }
    }

    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.clip_ratio <= 0.0 {
            return bad("clip_ratio must be positive");
        }
        if self.total_timesteps == 0 || self.rollout_length == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return bad("timesteps, rollout length, minibatch size and epochs must be positive");
        }
        if self.num_envs == 0 || self.rollout_length % self.num_envs != 0 {
            return bad("rollout_length must be a positive multiple of num_envs");
        }
        if self.eval_cadence == 0 || self.reward_window == 0 {
            return bad("eval_cadence and reward_window must be positive");
        }
        if self.dqn_batch_size == 0 || self.replay_capacity == 0 || self.target_sync_period == 0 || self.dqn_train_frequency == 0 {
            return bad("DQN batch, capacity, sync period and train frequency must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    /// ε at a given environment step.
    pub fn epsilon_at(&self, step: usize) -> f64 {
        let horizon = self.exploration_fraction * self.total_timesteps as f64;
        if horizon <= 0.0 {
            return self.exploration_final;
        }
        let frac = (step as f64 / horizon).min(1.0);
        self.exploration_initial + frac * (self.exploration_final - self.exploration_initial)
    }
}

/// Where training and evaluation episodes get their instances.
#[derive(Debug, Clone)]
pub enum InstanceSource {
    Fixed(Arc<ProblemInstance>),
    /// A fresh instance per episode; the generator's seed is replaced per draw.
    Generated(GeneratorConfig),
}

impl InstanceSource {
    pub fn instance(&self, stream: u64, index: u64) -> Result<Arc<ProblemInstance>, InstanceError> {
        match self {
            InstanceSource::Fixed(inst) => Ok(inst.clone()),
            InstanceSource::Generated(cfg) => Ok(Arc::new(generate(&cfg.with_seed(seed::nth(stream, index)))?)),
        }
    }

    pub fn machines(&self) -> usize {
        match self {
            InstanceSource::Fixed(inst) => inst.machines,
            InstanceSource::Generated(cfg) => cfg.machine_count,
        }
    }
}

/// Chooses a flat action for the single-agent environment.
pub trait Policy {
    fn act(&mut self, env: &Env) -> usize;
}

/// Chooses one action per agent for the multi-agent environment.
pub trait JointPolicy {
    fn act_joint(&mut self, env: &MultiEnv) -> Vec<usize>;
}

/// Output of a trainer.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub algorithm: Algorithm,
    /// Policy network (Q-network for DQN).
    pub actor: DenseNet,
    pub critic: Option<DenseNet>,
    pub curve: TrainingCurve,
    /// MAPPO only: per-agent mean episode reward per curve row.
    pub agent_curves: Vec<Vec<f64>>,
    pub updates: usize,
}

pub const POLICY_FORMAT_VERSION: u32 = 1;

/// Serialized trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format_version: u32,
    pub algorithm: Algorithm,
    pub job_slot_size: usize,
    pub machines: usize,
    /// Whether the actor is evaluated with the action mask applied.
    pub masked: bool,
    pub actor: DenseNet,
    pub critic: Option<DenseNet>,
}

impl PolicyCheckpoint {
    pub fn from_model(model: &TrainedModel, job_slot_size: usize, machines: usize, masked: bool) -> Self {
        PolicyCheckpoint {
            format_version: POLICY_FORMAT_VERSION,
            algorithm: model.algorithm,
            job_slot_size,
            machines,
            masked,
            actor: model.actor.clone(),
            critic: model.critic.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ckpt: PolicyCheckpoint = serde_json::from_str(text).map_err(|e| NnError::Format(e.to_string()))?;
        if ckpt.format_version != POLICY_FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported format_version {}", ckpt.format_version)));
        }
        ckpt.actor.check_shapes()?;
        if let Some(c) = &ckpt.critic {
            c.check_shapes()?;
        }
        let per_pair = crate::env::FEATURES_PER_PAIR;
        let (s, m) = (ckpt.job_slot_size, ckpt.machines);
        let (inputs, outputs) = if ckpt.algorithm.is_multi_agent() {
            (per_pair * s, s + 1)
        } else {
            (per_pair * s * m, s * m + 1)
        };
        if ckpt.actor.input_size() != inputs || ckpt.actor.output_size() != outputs {
            return Err(NnError::Format(format!(
                "actor shape {}->{} does not fit slot size {s} with {m} machines",
                ckpt.actor.input_size(),
                ckpt.actor.output_size()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), NnError> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn single_policy(&self) -> ActorPolicy {
        ActorPolicy {
            actor: Arc::new(self.actor.clone()),
            masked: self.masked,
        }
    }

    pub fn joint_policy(&self) -> ActorJointPolicy {
        ActorJointPolicy {
            actor: Arc::new(self.actor.clone()),
            masked: self.masked,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(Algorithm::parse(a.name()), Some(a));
        }
        assert_eq!(Algorithm::parse("a2c"), None);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = TrainConfig {
            total_timesteps: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(100) - 0.525).abs() < 1e-12);
        assert!((cfg.epsilon_at(200) - 0.05).abs() < 1e-12);
        assert!((cfg.epsilon_at(900) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_and_shape_check() {
        let model = TrainedModel {
            algorithm: Algorithm::MaskablePpo,
            actor: DenseNet::mlp(5 * 5 * 2, &[8], 11, 1),
            critic: Some(DenseNet::mlp(50, &[8], 1, 2)),
            curve: TrainingCurve::default(),
            agent_curves: vec![],
            updates: 0,
        };
        let ckpt = PolicyCheckpoint::from_model(&model, 5, 2, true);
        let back = PolicyCheckpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(back, ckpt);
        let wrong = PolicyCheckpoint { machines: 3, ..ckpt };
        assert!(PolicyCheckpoint::from_json(&wrong.to_json()).is_err());
    }
}
