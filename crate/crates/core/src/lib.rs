//! Unrelated parallel machine scheduling with sequence-dependent setup times
//! and worker resources.
//!
//! The crate provides:
//! - [`instance`]: the problem data model, a random generator and the instance file format;
//! - [`env`]: the single-agent decision environment with action masking and the reward ledger;
//! - [`multi_env`]: the per-machine multi-agent decomposition of the same simulation;
//! - [`nn`]: a small dense network with backpropagation and Adam;
//! - [`agents`]: baselines plus DQN, PPO, maskable PPO and MAPPO trainers;
//! - [`metrics`]: objective terms, Gantt export and an exhaustive solver for tiny instances;
//! - [`verify`]: independent invariant checkers used by the test suites.
//!
//! Batch workloads (evaluation episodes, oracle sweeps, rollout workers) go
//! through [`par`], which uses rayon when the `parallel` feature is enabled.

pub mod agents;
pub mod env;
pub mod instance;
pub mod metrics;
pub mod multi_env;
pub mod nn;
pub mod par;
pub mod seed;
pub mod verify;

/// Simulation time in integer units.
pub type Time = u64;

pub use env::{Action, ActionMask, Env, EnvConfig, EnvState, StepOutcome, Verdict};
pub use instance::{generate, illustrative_instance, GeneratorConfig, ProblemInstance};
pub use metrics::{ObjectiveWeights, ScheduleRecord};
pub use multi_env::MultiEnv;
