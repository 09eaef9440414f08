use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffers::{ReplayBuffer, Transition};
use super::curve::{CurveTracker, EpisodeRecord};
use super::ppo::{adam, apply, diverged};
use super::{Algorithm, InstanceSource, TrainConfig, TrainError, TrainedModel};
use crate::env::{Action, Env, EnvConfig};
use crate::metrics::ObjectiveWeights;
use crate::nn::{DenseNet, ForwardCache};
use crate::seed;

const ALGO: Algorithm = Algorithm::Dqn;

/// Uniform over all actions with probability ε, else the first maximal Q.
pub fn epsilon_greedy<R: Rng>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..q_values.len());
    }
    let mut best = 0;
    for (i, &q) in q_values.iter().enumerate() {
        if q > q_values[best] {
            best = i;
        }
    }
    best
}

fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Deep Q-learning with uniform replay, a periodically synced target network,
/// linear ε decay and a Huber TD loss. Exploration ignores the action mask.
pub fn dqn_train(source: &InstanceSource, env_cfg: &EnvConfig, cfg: &TrainConfig) -> Result<TrainedModel, TrainError> {
    cfg.check()?;
    let instance_stream = seed::derive(cfg.seed, "dqn-instances");
    let env_stream = seed::derive(cfg.seed, "dqn-env");
    let mut env = Env::new(source.instance(instance_stream, 0)?, env_cfg.clone().with_seed(seed::nth(env_stream, 0)))?;
    let mut q = DenseNet::mlp(env.observation_len(), &cfg.hidden, env.action_count(), seed::derive(cfg.seed, "q"));
    let mut target = q.clone();
    let mut opt = adam(cfg, &q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, "dqn-rng"));
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut tracker = CurveTracker::new(cfg.eval_cadence, cfg.reward_window);
    let weights = ObjectiveWeights::default();
    let mut cache = ForwardCache::default();
    let mut t_cache = ForwardCache::default();
    let mut obs = env.observe();
    let mut episode = 0u64;
    let mut episode_reward = 0.0;
    let mut updates = 0usize;
    let mut grad_out = vec![0.0; env.action_count()];

    for step in 0..cfg.total_timesteps {
        q.forward_into(&obs, &mut cache)?;
        if cache.output().iter().any(|x| !x.is_finite()) {
            return Err(diverged(ALGO, updates, "non-finite Q-values"));
        }
        let action = epsilon_greedy(cache.output(), cfg.epsilon_at(step), &mut rng);
        let out = env.step(Action(action))?;
        episode_reward += out.reward;
        replay.push(Transition {
            observation: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_observation: out.observation.clone(),
            done: out.terminated,
        });
        obs = out.observation;
        if out.terminated || out.truncated {
            tracker.record(EpisodeRecord {
                timestep: step + 1,
                reward: episode_reward,
                terminated: out.terminated,
                objective: env.state().schedule.objective(&weights),
                agent_rewards: vec![],
            });
            episode += 1;
            episode_reward = 0.0;
            obs = env.reset_with(source.instance(instance_stream, episode)?, seed::nth(env_stream, episode))?.0;
        }

        if step + 1 >= cfg.dqn_learning_starts && (step + 1) % cfg.dqn_train_frequency == 0 {
            updates += 1;
            let batch = replay.sample(cfg.dqn_batch_size, &mut rng);
            let scale = 1.0 / batch.len() as f64;
            let mut grads = q.zero_gradients();
            let mut loss = 0.0;
            for t in batch {
                let next_max = if t.done {
                    0.0
                } else {
                    target.forward_into(&t.next_observation, &mut t_cache)?;
                    t_cache.output().iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                let y = t.reward + cfg.gamma * next_max;
                q.forward_into(&t.observation, &mut cache)?;
                let err = cache.output()[t.action] - y;
                loss += huber(err) * scale;
                grad_out.iter_mut().for_each(|g| *g = 0.0);
                grad_out[t.action] = huber_grad(err) * scale;
                q.backward(&mut cache, &grad_out, &mut grads)?;
            }
            if !loss.is_finite() {
                return Err(diverged(ALGO, updates, format!("TD loss is {loss}")));
            }
            apply(ALGO, updates, "q-network", &mut q, &mut opt, &mut grads, cfg.dqn_max_grad_norm)?;
            if updates % cfg.target_sync_period == 0 {
                target = q.clone();
            }
        }
        tracker.advance(step + 1);
    }

    Ok(TrainedModel {
        algorithm: ALGO,
        actor: q,
        critic: None,
        curve: tracker.finish(cfg.total_timesteps),
        agent_curves: vec![],
        updates,
    })
}
