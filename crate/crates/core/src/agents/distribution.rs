use rand::Rng;

/// Log-softmax over `logits`, excluding masked-out entries (they get `-inf`).
/// At least one entry must be valid.
pub fn masked_log_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let valid = |i: usize| mask.is_none_or(|m| m[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| valid(i))
        .map(|(_, &z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| valid(i))
        .map(|(_, &z)| (z - max).exp())
        .sum();
    let log_z = max + sum.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, &z)| if valid(i) { z - log_z } else { f64::NEG_INFINITY })
        .collect()
}

/// A categorical distribution over actions, built from (optionally masked) logits.
#[derive(Debug, Clone)]
pub struct Categorical {
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Categorical {
    pub fn new(logits: &[f64], mask: Option<&[bool]>) -> Self {
        let log_probs = masked_log_softmax(logits, mask);
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Categorical { log_probs, probs }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        // Rounding left `acc` just below 1.
        last
    }

    /// First index of maximal probability.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(&p, _)| p > 0.0)
            .map(|(p, l)| -p * l)
            .sum()
    }

    /// Gradient with respect to the logits of
    /// `−min(ρA, clip(ρ, 1−ε, 1+ε)A) − c·H`, where `ρ = π(a)/π_old(a)`.
    /// Masked entries receive zero gradient.
    pub fn ppo_logit_grad(&self, action: usize, old_log_prob: f64, advantage: f64, clip: f64, entropy_coef: f64) -> Vec<f64> {
        let ratio = (self.log_probs[action] - old_log_prob).exp();
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        // The unclipped branch carries gradient whenever it is the active minimum.
        let active = ratio * advantage <= clipped * advantage;
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .enumerate()
            .map(|(i, (&p, &lp))| {
                if p == 0.0 {
                    return 0.0;
                }
                let mut g = 0.0;
                if active {
                    let indicator = if i == action { 1.0 } else { 0.0 };
                    g -= advantage * ratio * (indicator - p);
                }
                g + entropy_coef * p * (lp + h)
            })
            .collect()
    }
}

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1−ε, 1+ε)A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    (ratio * advantage).min(clipped * advantage)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn masked_entries_have_zero_probability() {
        let d = Categorical::new(&[5.0, 1.0, -2.0, 3.0], Some(&[false, true, true, false]));
        assert_eq!(d.probs[0], 0.0);
        assert_eq!(d.probs[3], 0.0);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let a = d.sample(&mut rng);
            assert!(a == 1 || a == 2);
        }
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn masked_logits_get_no_gradient() {
        let mask = [true, false, true];
        let d = Categorical::new(&[0.3, 9.0, -0.1], Some(&mask));
        let g = d.ppo_logit_grad(0, d.log_prob(0) - 0.05, 1.3, 0.2, 0.01);
        assert_eq!(g[1], 0.0);
    }

    /// Finite-difference check of the logit gradient against the scalar loss.
    #[test]
    fn logit_gradient_matches_finite_differences() {
        let logits = [0.2, -0.4, 0.7, 0.1];
        let mask = [true, true, false, true];
        let old = Categorical::new(&[0.0, 0.1, 0.0, -0.2], Some(&mask));
        for &(action, adv) in &[(0usize, 1.5f64), (1, -0.7), (3, 0.4)] {
            let old_lp = old.log_prob(action);
            let loss = |z: &[f64]| {
                let d = Categorical::new(z, Some(&mask));
                let ratio = (d.log_prob(action) - old_lp).exp();
                -clipped_surrogate(ratio, adv, 0.2) - 0.01 * d.entropy()
            };
            let g = Categorical::new(&logits, Some(&mask)).ppo_logit_grad(action, old_lp, adv, 0.2, 0.01);
            for i in [0, 1, 3] {
                let mut p = logits;
                let mut m = logits;
                p[i] += 1e-6;
                m[i] -= 1e-6;
                let numeric = (loss(&p) - loss(&m)) / 2e-6;
                assert!((numeric - g[i]).abs() < 1e-6, "i={i} numeric={numeric} analytic={}", g[i]);
            }
        }
    }

    #[test]
    fn entropy_of_uniform() {
        let d = Categorical::new(&[0.0; 4], None);
        assert!((d.entropy() - 4f64.ln()).abs() < 1e-12);
    }

    proptest! {
        /// The objective never exceeds (1+ε)|A|, whatever the ratio.
        #[test]
        fn surrogate_is_bounded_above(ratio in 0.0f64..50.0, adv in -100.0f64..100.0, clip in 0.01f64..0.9) {
            let s = clipped_surrogate(ratio, adv, clip);
            prop_assert!(s <= (1.0 + clip) * adv.abs() + 1e-12);
        }

        /// Positive advantages are bounded in magnitude too.
        #[test]
        fn surrogate_magnitude_for_positive_advantage(ratio in 0.0f64..50.0, adv in 0.0f64..100.0, clip in 0.01f64..0.9) {
            let s = clipped_surrogate(ratio, adv, clip);
            prop_assert!(s.abs() <= (1.0 + clip) * adv + 1e-12);
        }
    }
}
