use rand::Rng;

/// Generalized advantage estimates and returns for one trajectory segment.
///
/// `ended[t]` marks the last step of an episode. For a truncated episode
/// `bootstrap[t]` holds the value of the final observation; for a terminated
/// one it must be zero. `last_value` bootstraps the segment's final step when
/// that step did not end an episode.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    ended: &[bool],
    bootstrap: &[f64],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if ended[t] {
            bootstrap[t]
        } else if t + 1 < n {
            values[t + 1]
        } else {
            last_value
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        let carry = if ended[t] { 0.0 } else { gamma * lambda * running };
        running = delta + carry;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Shifts to zero mean and, when the spread is not degenerate, unit variance.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    xs.iter_mut().for_each(|x| *x = (*x - mean) * scale);
}

/// On-policy storage for one environment's segment of a rollout.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// Empty when the policy is unmasked.
    pub masks: Vec<Vec<bool>>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub ended: Vec<bool>,
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn clear(&mut self) {
        *self = RolloutBuffer::default();
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        observation: Vec<f64>,
        action: usize,
        mask: Option<Vec<bool>>,
        log_prob: f64,
        value: f64,
        reward: f64,
        ended: bool,
        bootstrap: f64,
    ) {
        self.observations.push(observation);
        self.actions.push(action);
        if let Some(m) = mask {
            self.masks.push(m);
        }
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.ended.push(ended);
        self.bootstrap.push(bootstrap);
    }

    /// Fills advantages and returns once the segment is complete.
    pub fn finish(&mut self, last_value: f64, gamma: f64, lambda: f64) {
        let (a, r) = compute_gae(&self.rewards, &self.values, &self.ended, &self.bootstrap, last_value, gamma, lambda);
        self.advantages = a;
        self.returns = r;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// True only on termination; truncated steps still bootstrap.
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `batch` indices drawn uniformly with replacement.
    pub fn sample<'a, R: Rng>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..batch).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}
