use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::buffers::{compute_gae, normalize};
use super::curve::{CurveTracker, EpisodeRecord};
use super::distribution::Categorical;
use super::ppo::{actor_gradients, adam, apply, critic_gradients, diverged, ActorSample};
use super::{Algorithm, InstanceSource, JointPolicy, TrainConfig, TrainError, TrainedModel};
use crate::env::EnvConfig;
use crate::metrics::ObjectiveWeights;
use crate::multi_env::MultiEnv;
use crate::nn::{DenseNet, ForwardCache};
use crate::{par, seed};

const ALGO: Algorithm = Algorithm::Mappo;

/// Shared actor applied to every agent's own observation; argmax per agent.
#[derive(Debug, Clone)]
pub struct ActorJointPolicy {
    pub actor: Arc<DenseNet>,
    pub masked: bool,
}

impl JointPolicy for ActorJointPolicy {
    fn act_joint(&mut self, env: &MultiEnv) -> Vec<usize> {
        (0..env.agent_count())
            .map(|m| {
                let out = self.actor.forward(&env.observe_agent(m)).expect("observation matches actor input");
                let mask = env.per_agent_mask(m);
                Categorical::new(out.output(), self.masked.then_some(mask.as_slice())).argmax()
            })
            .collect()
    }
}

/// Joint-step storage; per-agent vectors are indexed `[t][agent]`.
#[derive(Debug, Clone, Default)]
struct JointBuffer {
    global: Vec<Vec<f64>>,
    local: Vec<Vec<Vec<f64>>>,
    masks: Vec<Vec<Vec<bool>>>,
    actions: Vec<Vec<usize>>,
    log_probs: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
    ended: Vec<bool>,
    bootstrap: Vec<Vec<f64>>,
    advantages: Vec<Vec<f64>>,
    returns: Vec<Vec<f64>>,
}

impl JointBuffer {
    fn len(&self) -> usize {
        self.ended.len()
    }

    fn finish(&mut self, last_values: &[f64], agents: usize, gamma: f64, lambda: f64) {
        let n = self.len();
        self.advantages = vec![vec![0.0; agents]; n];
        self.returns = vec![vec![0.0; agents]; n];
        for m in 0..agents {
            let col = |v: &Vec<Vec<f64>>| v.iter().map(|row| row[m]).collect::<Vec<f64>>();
            let (adv, ret) = compute_gae(
                &col(&self.rewards),
                &col(&self.values),
                &self.ended,
                &col(&self.bootstrap),
                last_values[m],
                gamma,
                lambda,
            );
            for t in 0..n {
                self.advantages[t][m] = adv[t];
                self.returns[t][m] = ret[t];
            }
        }
    }
}

struct Worker {
    env: MultiEnv,
    rng: ChaCha8Rng,
    instance_stream: u64,
    env_stream: u64,
    episode: u64,
    episode_rewards: Vec<f64>,
    buffer: JointBuffer,
    finished: Vec<(usize, EpisodeRecord)>,
    error: Option<TrainError>,
}

impl Worker {
    fn new(source: &InstanceSource, env_cfg: &EnvConfig, seed: u64, index: usize) -> Result<Self, TrainError> {
        let ws = seed::nth(seed::derive(seed, "mappo-worker"), index as u64);
        let instance_stream = seed::derive(ws, "instances");
        let env_stream = seed::derive(ws, "env");
        let instance = source.instance(instance_stream, 0)?;
        let env = MultiEnv::new(instance, env_cfg.clone().with_seed(seed::nth(env_stream, 0)))?;
        let agents = env.agent_count();
        Ok(Worker {
            env,
            rng: ChaCha8Rng::seed_from_u64(seed::derive(ws, "actions")),
            instance_stream,
            env_stream,
            episode: 0,
            episode_rewards: vec![0.0; agents],
            buffer: JointBuffer::default(),
            finished: Vec::new(),
            error: None,
        })
    }

    fn collect(
        &mut self,
        steps: usize,
        actor: &DenseNet,
        critic: &DenseNet,
        source: &InstanceSource,
        cfg: &TrainConfig,
    ) -> Result<(), TrainError> {
        self.buffer = JointBuffer::default();
        self.finished.clear();
        let agents = self.env.agent_count();
        let mut a_cache = ForwardCache::default();
        let mut c_cache = ForwardCache::default();
        let weights = ObjectiveWeights::default();
        for step in 0..steps {
            let global = self.env.build_global_observation();
            let local: Vec<Vec<f64>> = (0..agents).map(|m| self.env.observe_agent(m)).collect();
            let masks: Vec<Vec<bool>> = if cfg.mappo_masked {
                (0..agents).map(|m| self.env.per_agent_mask(m).0).collect()
            } else {
                vec![]
            };
            let mut actions = Vec::with_capacity(agents);
            let mut log_probs = Vec::with_capacity(agents);
            for (m, obs) in local.iter().enumerate() {
                actor.forward_into(obs, &mut a_cache)?;
                if a_cache.output().iter().any(|x| !x.is_finite()) {
                    return Err(diverged(ALGO, 0, "non-finite policy logits"));
                }
                let dist = Categorical::new(a_cache.output(), masks.get(m).map(Vec::as_slice));
                let a = dist.sample(&mut self.rng);
                actions.push(a);
                log_probs.push(dist.log_prob(a));
            }
            critic.forward_into(&global, &mut c_cache)?;
            let values = c_cache.output().to_vec();
            let out = self.env.joint_step(&actions)?;
            let rewards: Vec<f64> = out.agents.iter().map(|a| a.reward).collect();
            for (acc, r) in self.episode_rewards.iter_mut().zip(&rewards) {
                *acc += r;
            }
            let ended = out.terminated || out.truncated;
            let bootstrap = if out.truncated && !out.terminated {
                critic.forward_into(&self.env.build_global_observation(), &mut c_cache)?;
                c_cache.output().to_vec()
            } else {
                vec![0.0; agents]
            };
            let b = &mut self.buffer;
            b.global.push(global);
            b.local.push(local);
            b.masks.push(masks);
            b.actions.push(actions);
            b.log_probs.push(log_probs);
            b.values.push(values);
            b.rewards.push(rewards);
            b.ended.push(ended);
            b.bootstrap.push(bootstrap);
            if ended {
                self.finished.push((
                    step,
                    EpisodeRecord {
                        timestep: 0,
                        reward: self.episode_rewards.iter().sum(),
                        terminated: out.terminated,
                        objective: self.env.state().schedule.objective(&weights),
                        agent_rewards: self.episode_rewards.clone(),
                    },
                ));
                self.episode += 1;
                let instance = source.instance(self.instance_stream, self.episode)?;
                self.env.reset_with(instance, seed::nth(self.env_stream, self.episode))?;
                self.episode_rewards.iter_mut().for_each(|r| *r = 0.0);
            }
        }
        critic.forward_into(&self.env.build_global_observation(), &mut c_cache)?;
        let last = c_cache.output().to_vec();
        self.buffer.finish(&last, agents, cfg.gamma, cfg.gae_lambda);
        Ok(())
    }
}

/// Multi-agent PPO: one actor shared by all machines (own observation, `S + 1`
/// logits) and a centralized critic with one value head per agent over the
/// global observation. Surrogate updates pool every agent's samples.
pub fn mappo_train(source: &InstanceSource, env_cfg: &EnvConfig, cfg: &TrainConfig) -> Result<TrainedModel, TrainError> {
    cfg.check()?;
    let mut workers = (0..cfg.num_envs)
        .map(|i| Worker::new(source, env_cfg, cfg.seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let probe = &workers[0].env;
    let agents = probe.agent_count();
    let mut actor = DenseNet::mlp(
        probe.agent_observation_len(),
        &cfg.hidden,
        probe.agent_action_count(),
        seed::derive(cfg.seed, "actor"),
    );
    actor.scale_output_layer(0.01);
    let mut critic = DenseNet::mlp(
        probe.env().observation_len(),
        &cfg.hidden,
        agents,
        seed::derive(cfg.seed, "critic"),
    );
    let mut actor_opt = adam(cfg, &actor);
    let mut critic_opt = adam(cfg, &critic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, "minibatches"));
    let mut tracker = CurveTracker::new(cfg.eval_cadence, cfg.reward_window);
    let per_env = cfg.rollout_length / cfg.num_envs;
    let n_envs = cfg.num_envs;
    let mut timesteps = 0;
    let mut updates = 0;
    let (mut a_cache, mut c_cache) = (ForwardCache::default(), ForwardCache::default());

    while timesteps < cfg.total_timesteps {
        let steps = per_env.min((cfg.total_timesteps - timesteps).div_ceil(n_envs));
        {
            let (a, c) = (&actor, &critic);
            par::for_each_mut(&mut workers, |_, w| {
                if let Err(e) = w.collect(steps, a, c, source, cfg) {
                    w.error = Some(e);
                }
            });
        }
        for (wi, w) in workers.iter_mut().enumerate() {
            if let Some(e) = w.error.take() {
                return Err(e);
            }
            for (step, mut rec) in w.finished.drain(..) {
                rec.timestep = timesteps + step * n_envs + wi + 1;
                tracker.record(rec);
            }
        }
        timesteps += steps * n_envs;
        tracker.advance(timesteps);

        // Pooled actor samples (worker, t, agent) and critic samples (worker, t).
        let steps_index: Vec<(usize, usize)> = workers
            .iter()
            .enumerate()
            .flat_map(|(wi, w)| (0..w.buffer.len()).map(move |t| (wi, t)))
            .collect();
        let pooled: Vec<(usize, usize, usize)> = steps_index
            .iter()
            .flat_map(|&(wi, t)| (0..agents).map(move |m| (wi, t, m)))
            .collect();
        let mut advantages: Vec<f64> = pooled
            .iter()
            .map(|&(wi, t, m)| workers[wi].buffer.advantages[t][m])
            .collect();
        normalize(&mut advantages);

        let mut actor_order: Vec<usize> = (0..pooled.len()).collect();
        let mut critic_order: Vec<usize> = (0..steps_index.len()).collect();
        for _ in 0..cfg.epochs {
            actor_order.shuffle(&mut rng);
            for chunk in actor_order.chunks(cfg.minibatch_size) {
                updates += 1;
                let samples: Vec<ActorSample<'_>> = chunk
                    .iter()
                    .map(|&k| {
                        let (wi, t, m) = pooled[k];
                        let b = &workers[wi].buffer;
                        ActorSample {
                            observation: &b.local[t][m],
                            mask: b.masks[t].get(m).map(Vec::as_slice),
                            action: b.actions[t][m],
                            old_log_prob: b.log_probs[t][m],
                            advantage: advantages[k],
                        }
                    })
                    .collect();
                let mut ga = actor.zero_gradients();
                let loss = actor_gradients(&actor, &samples, cfg, &mut ga, &mut a_cache)?;
                if !loss.is_finite() {
                    return Err(diverged(ALGO, updates, format!("policy loss is {loss}")));
                }
                apply(ALGO, updates, "actor", &mut actor, &mut actor_opt, &mut ga, cfg.max_grad_norm)?;
            }
            critic_order.shuffle(&mut rng);
            for chunk in critic_order.chunks(cfg.minibatch_size) {
                let obs: Vec<&[f64]> = chunk
                    .iter()
                    .map(|&k| workers[steps_index[k].0].buffer.global[steps_index[k].1].as_slice())
                    .collect();
                let targets: Vec<&[f64]> = chunk
                    .iter()
                    .map(|&k| workers[steps_index[k].0].buffer.returns[steps_index[k].1].as_slice())
                    .collect();
                let mut gc = critic.zero_gradients();
                let vloss = critic_gradients(&critic, &obs, &targets, cfg, &mut gc, &mut c_cache)?;
                if !vloss.is_finite() {
                    return Err(diverged(ALGO, updates, format!("value loss is {vloss}")));
                }
                apply(ALGO, updates, "critic", &mut critic, &mut critic_opt, &mut gc, cfg.max_grad_norm)?;
            }
        }
    }

    let curve = tracker.finish(timesteps);
    let agent_curves = (0..agents)
        .map(|m| curve.rows.iter().map(|r| r.agent_means.get(m).copied().unwrap_or(f64::NAN)).collect())
        .collect();
    Ok(TrainedModel {
        algorithm: ALGO,
        actor,
        critic: Some(critic),
        curve,
        agent_curves,
        updates,
    })
}
