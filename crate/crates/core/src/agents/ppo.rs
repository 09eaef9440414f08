use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::buffers::{normalize, RolloutBuffer};
use super::curve::{CurveTracker, EpisodeRecord};
use super::distribution::Categorical;
use super::{Algorithm, InstanceSource, Policy, TrainConfig, TrainError, TrainedModel};
use crate::env::{Action, ActionMask, Env, EnvConfig};
use crate::metrics::ObjectiveWeights;
use crate::nn::{AdamConfig, AdamState, DenseNet, ForwardCache, Gradients};
use crate::{par, seed};

/// Argmax over the actor's logits, masked when `masked` is set.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub actor: Arc<DenseNet>,
    pub masked: bool,
}

impl Policy for ActorPolicy {
    fn act(&mut self, env: &Env) -> usize {
        let logits = self.actor.forward(&env.observe()).expect("observation matches actor input");
        let mask = env.action_mask();
        let dist = Categorical::new(logits.output(), self.masked.then_some(mask.as_slice()));
        dist.argmax()
    }
}

pub(crate) fn diverged(algorithm: Algorithm, update: usize, detail: impl Into<String>) -> TrainError {
    TrainError::Divergence {
        algorithm: algorithm.name(),
        update,
        detail: detail.into(),
    }
}

pub(crate) fn adam(cfg: &TrainConfig, net: &DenseNet) -> AdamState {
    AdamState::new(
        net,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    )
}

/// Clips, then applies one Adam step, mapping failures to a divergence error.
pub(crate) fn apply(
    algorithm: Algorithm,
    update: usize,
    which: &str,
    net: &mut DenseNet,
    opt: &mut AdamState,
    grads: &mut Gradients,
    max_norm: f64,
) -> Result<(), TrainError> {
    let norm = grads.clip_norm(max_norm);
    if !norm.is_finite() {
        return Err(diverged(algorithm, update, format!("{which} gradient norm is {norm}")));
    }
    opt.step(net, grads)
        .map_err(|e| diverged(algorithm, update, format!("{which} update: {e}")))
}

/// One actor sample for a clipped-surrogate minibatch.
pub(crate) struct ActorSample<'a> {
    pub observation: &'a [f64],
    pub mask: Option<&'a [bool]>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
}

/// Accumulates the surrogate-plus-entropy gradient over `samples`, averaged.
/// Returns the mean loss.
pub(crate) fn actor_gradients(
    actor: &DenseNet,
    samples: &[ActorSample<'_>],
    cfg: &TrainConfig,
    grads: &mut Gradients,
    cache: &mut ForwardCache,
) -> Result<f64, crate::nn::NnError> {
    let scale = 1.0 / samples.len() as f64;
    let mut loss = 0.0;
    for s in samples {
        actor.forward_into(s.observation, cache)?;
        let dist = Categorical::new(cache.output(), s.mask);
        let ratio = (dist.log_prob(s.action) - s.old_log_prob).exp();
        loss -= super::clipped_surrogate(ratio, s.advantage, cfg.clip_ratio) + cfg.entropy_coef * dist.entropy();
        let mut g = dist.ppo_logit_grad(s.action, s.old_log_prob, s.advantage, cfg.clip_ratio, cfg.entropy_coef);
        g.iter_mut().for_each(|x| *x *= scale);
        actor.backward(cache, &g, grads)?;
    }
    Ok(loss * scale)
}

/// Squared-error value gradient, averaged. `targets[i]` has one entry per critic output.
pub(crate) fn critic_gradients(
    critic: &DenseNet,
    observations: &[&[f64]],
    targets: &[&[f64]],
    cfg: &TrainConfig,
    grads: &mut Gradients,
    cache: &mut ForwardCache,
) -> Result<f64, crate::nn::NnError> {
    let scale = 1.0 / observations.len() as f64;
    let mut loss = 0.0;
    let mut g = vec![0.0; critic.output_size()];
    for (obs, target) in observations.iter().zip(targets) {
        critic.forward_into(obs, cache)?;
        for ((gi, v), t) in g.iter_mut().zip(cache.output()).zip(target.iter()) {
            loss += cfg.value_coef * (v - t).powi(2);
            *gi = 2.0 * cfg.value_coef * (v - t) * scale;
        }
        critic.backward(cache, &g, grads)?;
    }
    Ok(loss * scale)
}

struct Worker {
    env: Env,
    rng: ChaCha8Rng,
    instance_stream: u64,
    env_stream: u64,
    episode: u64,
    observation: Vec<f64>,
    mask: ActionMask,
    episode_reward: f64,
    buffer: RolloutBuffer,
    /// `(local step, record)` for episodes that ended this rollout.
    finished: Vec<(usize, EpisodeRecord)>,
    error: Option<TrainError>,
}

impl Worker {
    fn new(source: &InstanceSource, env_cfg: &EnvConfig, seed: u64, index: usize) -> Result<Self, TrainError> {
        let ws = seed::nth(seed::derive(seed, "ppo-worker"), index as u64);
        let instance_stream = seed::derive(ws, "instances");
        let env_stream = seed::derive(ws, "env");
        let instance = source.instance(instance_stream, 0)?;
        let env = Env::new(instance, env_cfg.clone().with_seed(seed::nth(env_stream, 0)))?;
        Ok(Worker {
            observation: env.observe(),
            mask: env.action_mask(),
            env,
            rng: ChaCha8Rng::seed_from_u64(seed::derive(ws, "actions")),
            instance_stream,
            env_stream,
            episode: 0,
            episode_reward: 0.0,
            buffer: RolloutBuffer::default(),
            finished: Vec::new(),
            error: None,
        })
    }

    fn next_episode(&mut self, source: &InstanceSource) -> Result<(), TrainError> {
        self.episode += 1;
        let instance = source.instance(self.instance_stream, self.episode)?;
        let (obs, mask) = self.env.reset_with(instance, seed::nth(self.env_stream, self.episode))?;
        self.observation = obs;
        self.mask = mask;
        self.episode_reward = 0.0;
        Ok(())
    }

    fn collect(
        &mut self,
        steps: usize,
        actor: &DenseNet,
        critic: &DenseNet,
        masked: bool,
        source: &InstanceSource,
        cfg: &TrainConfig,
    ) -> Result<(), TrainError> {
        self.buffer.clear();
        self.finished.clear();
        let mut a_cache = ForwardCache::default();
        let mut c_cache = ForwardCache::default();
        let weights = ObjectiveWeights::default();
        for step in 0..steps {
            actor.forward_into(&self.observation, &mut a_cache)?;
            if a_cache.output().iter().any(|x| !x.is_finite()) {
                return Err(diverged(algorithm(masked), 0, "non-finite policy logits"));
            }
            let dist = Categorical::new(a_cache.output(), masked.then_some(self.mask.as_slice()));
            let action = dist.sample(&mut self.rng);
            if masked {
                assert!(self.mask.0[action], "masked policy sampled an invalid action");
            }
            critic.forward_into(&self.observation, &mut c_cache)?;
            let value = c_cache.output()[0];
            let out = self.env.step(Action(action))?;
            self.episode_reward += out.reward;
            let ended = out.terminated || out.truncated;
            let bootstrap = if out.truncated && !out.terminated {
                critic.forward_into(&out.observation, &mut c_cache)?;
                c_cache.output()[0]
            } else {
                0.0
            };
            let obs = std::mem::replace(&mut self.observation, out.observation);
            let mask = masked.then(|| self.mask.0.clone());
            self.buffer
                .push(obs, action, mask, dist.log_prob(action), value, out.reward, ended, bootstrap);
            if ended {
                self.finished.push((
                    step,
                    EpisodeRecord {
                        timestep: 0,
                        reward: self.episode_reward,
                        terminated: out.terminated,
                        objective: self.env.state().schedule.objective(&weights),
                        agent_rewards: vec![],
                    },
                ));
                self.next_episode(source)?;
            } else {
                self.mask = self.env.action_mask();
            }
        }
        critic.forward_into(&self.observation, &mut c_cache)?;
        self.buffer.finish(c_cache.output()[0], cfg.gamma, cfg.gae_lambda);
        Ok(())
    }
}

fn algorithm(masked: bool) -> Algorithm {
    if masked {
        Algorithm::MaskablePpo
    } else {
        Algorithm::Ppo
    }
}

/// PPO with clipped surrogate, GAE and an entropy bonus. With `masked`,
/// invalid actions get probability zero in both sampling and the loss.
pub fn ppo_train(
    source: &InstanceSource,
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
    masked: bool,
) -> Result<TrainedModel, TrainError> {
    cfg.check()?;
    let algo = algorithm(masked);
    let mut workers = (0..cfg.num_envs)
        .map(|i| Worker::new(source, env_cfg, cfg.seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let obs_len = workers[0].env.observation_len();
    let act_len = workers[0].env.action_count();
    let mut actor = DenseNet::mlp(obs_len, &cfg.hidden, act_len, seed::derive(cfg.seed, "actor"));
    actor.scale_output_layer(0.01);
    let mut critic = DenseNet::mlp(obs_len, &cfg.hidden, 1, seed::derive(cfg.seed, "critic"));
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
                if let Err(e) = w.collect(steps, a, c, masked, source, cfg) {
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

        let mut advantages: Vec<f64> = workers.iter().flat_map(|w| w.buffer.advantages.iter().copied()).collect();
        normalize(&mut advantages);
        let index: Vec<(usize, usize)> = workers
            .iter()
            .enumerate()
            .flat_map(|(wi, w)| (0..w.buffer.len()).map(move |t| (wi, t)))
            .collect();
        let offsets: Vec<usize> = workers
            .iter()
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += w.buffer.len();
                Some(o)
            })
            .collect();
        let mut order: Vec<usize> = (0..index.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                updates += 1;
                let samples: Vec<ActorSample<'_>> = chunk
                    .iter()
                    .map(|&k| {
                        let (wi, t) = index[k];
                        let b = &workers[wi].buffer;
                        ActorSample {
                            observation: &b.observations[t],
                            mask: masked.then(|| b.masks[t].as_slice()),
                            action: b.actions[t],
                            old_log_prob: b.log_probs[t],
                            advantage: advantages[offsets[wi] + t],
                        }
                    })
                    .collect();
                let mut ga = actor.zero_gradients();
                let loss = actor_gradients(&actor, &samples, cfg, &mut ga, &mut a_cache)?;
                if !loss.is_finite() {
                    return Err(diverged(algo, updates, format!("policy loss is {loss}")));
                }
                apply(algo, updates, "actor", &mut actor, &mut actor_opt, &mut ga, cfg.max_grad_norm)?;

                let obs: Vec<&[f64]> = chunk.iter().map(|&k| workers[index[k].0].buffer.observations[index[k].1].as_slice()).collect();
                let targets: Vec<&[f64]> = chunk
                    .iter()
                    .map(|&k| std::slice::from_ref(&workers[index[k].0].buffer.returns[index[k].1]))
                    .collect();
                let mut gc = critic.zero_gradients();
                let vloss = critic_gradients(&critic, &obs, &targets, cfg, &mut gc, &mut c_cache)?;
                if !vloss.is_finite() {
                    return Err(diverged(algo, updates, format!("value loss is {vloss}")));
                }
                apply(algo, updates, "critic", &mut critic, &mut critic_opt, &mut gc, cfg.max_grad_norm)?;
            }
        }
    }

    Ok(TrainedModel {
        algorithm: algo,
        actor,
        critic: Some(critic),
        curve: tracker.finish(timesteps),
        agent_curves: vec![],
        updates,
    })
}
