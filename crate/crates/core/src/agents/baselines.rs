use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{JointPolicy, Policy};
use crate::env::{Action, Env};
use crate::multi_env::MultiEnv;

/// Uniform over valid actions (mask-aware) or over the whole action space.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub mask_aware: bool,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(mask_aware: bool, seed: u64) -> Self {
        RandomPolicy {
            mask_aware,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn pick(&mut self, mask: &[bool]) -> usize {
        if !self.mask_aware {
            return self.rng.gen_range(0..mask.len());
        }
        let valid = mask.iter().filter(|&&b| b).count();
        // The do-nothing entry is always valid, so `valid` is never zero.
        let k = self.rng.gen_range(0..valid);
        mask.iter().enumerate().filter(|(_, &b)| b).nth(k).map(|(i, _)| i).unwrap()
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &Env) -> usize {
        let mask = env.action_mask();
        self.pick(mask.as_slice())
    }
}

impl JointPolicy for RandomPolicy {
    fn act_joint(&mut self, env: &MultiEnv) -> Vec<usize> {
        (0..env.agent_count())
            .map(|m| {
                let mask = env.per_agent_mask(m);
                self.pick(mask.as_slice())
            })
            .collect()
    }
}

/// The greedy dispatch choice: among feasible assignments, minimal total time,
/// then minimal workforce, lowest job id, lowest machine id. Do-nothing if none.
pub fn greedy_choice(env: &Env) -> Action {
    let s_len = env.slot_size();
    let mask = env.action_mask();
    let state = env.state();
    let inst = env.instance();
    let mut best: Option<((u64, u32, usize, usize), usize)> = None;
    for (idx, _) in mask.as_slice()[..s_len * env.machines()].iter().enumerate().filter(|(_, &b)| b) {
        let (m, s) = (idx / s_len, idx % s_len);
        let Some(job) = state.job_slot[s] else { continue };
        let Ok(tt) = env.total_time(job, m) else { continue };
        let key = (tt, inst.workforce(job, m).unwrap_or(u32::MAX), job, m);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, idx));
        }
    }
    best.map_or(env.do_nothing(), |(_, idx)| Action(idx))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyPolicy;

impl Policy for GreedyPolicy {
    fn act(&mut self, env: &Env) -> usize {
        greedy_choice(env).0
    }
}

impl JointPolicy for GreedyPolicy {
    /// Agents claim greedily in machine order without repeating a job.
    fn act_joint(&mut self, env: &MultiEnv) -> Vec<usize> {
        let inner = env.env();
        let s_len = inner.slot_size();
        let state = inner.state();
        let mut taken = vec![false; s_len];
        (0..env.agent_count())
            .map(|m| {
                let mask = env.per_agent_mask(m);
                let pick = (0..s_len)
                    .filter(|&s| mask.0[s] && !taken[s])
                    .filter_map(|s| {
                        let job = state.job_slot[s]?;
                        let tt = inner.total_time(job, m).ok()?;
                        Some(((tt, inner.instance().workforce(job, m).unwrap_or(u32::MAX), job), s))
                    })
                    .min();
                match pick {
                    Some((_, s)) => {
                        taken[s] = true;
                        s
                    }
                    None => s_len,
                }
            })
            .collect()
    }
}
