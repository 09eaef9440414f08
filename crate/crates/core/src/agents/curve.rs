use std::fmt::Write as _;

pub const CURVE_HEADER: &str = "timestep,mean_reward,std_reward,completion_rate,mean_objective,episodes";

/// A finished training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Global environment step at which the episode ended.
    pub timestep: usize,
    pub reward: f64,
    pub terminated: bool,
    pub objective: f64,
    /// Multi-agent runs only.
    pub agent_rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub timestep: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub completion_rate: f64,
    pub mean_objective: f64,
    /// Episodes in the window; zero means the statistics are NaN.
    pub episodes: usize,
    pub agent_means: Vec<f64>,
}

/// Rows over a moving window of the most recent episodes, one per cadence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.timestep, r.mean_reward, r.std_reward, r.completion_rate, r.mean_objective, r.episodes
            );
        }
        out
    }

    /// Per-agent mean rewards, one line per row.
    pub fn agents_csv(&self) -> String {
        let agents = self.rows.iter().map(|r| r.agent_means.len()).max().unwrap_or(0);
        let mut out = String::from("timestep");
        for a in 0..agents {
            let _ = write!(out, ",agent{a}");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.timestep.to_string());
            for v in &r.agent_means {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn first(&self) -> Option<&CurveRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&CurveRow> {
        self.rows.last()
    }
}

/// Turns a stream of episode records into curve rows.
#[derive(Debug, Clone)]
pub(crate) struct CurveTracker {
    cadence: usize,
    window: usize,
    next_boundary: usize,
    episodes: Vec<EpisodeRecord>,
    pub curve: TrainingCurve,
}

impl CurveTracker {
    pub fn new(cadence: usize, window: usize) -> Self {
        CurveTracker {
            cadence,
            window,
            next_boundary: cadence,
            episodes: Vec::new(),
            curve: TrainingCurve::default(),
        }
    }

    /// Records may arrive out of order within one rollout; `advance` sorts.
    pub fn record(&mut self, episode: EpisodeRecord) {
        self.episodes.push(episode);
    }

    /// Emits every row whose boundary is at or before `now`.
    pub fn advance(&mut self, now: usize) {
        self.episodes.sort_by_key(|e| e.timestep);
        while self.next_boundary <= now {
            self.emit(self.next_boundary);
            self.next_boundary += self.cadence;
        }
    }

    /// Flushes rows up to `total`, ending with a row at `total` itself.
    pub fn finish(mut self, total: usize) -> TrainingCurve {
        self.advance(total);
        if self.curve.last().is_none_or(|r| r.timestep < total) {
            self.emit(total);
        }
        self.curve
    }

    fn emit(&mut self, boundary: usize) {
        let upto = self.episodes.partition_point(|e| e.timestep <= boundary);
        let window = &self.episodes[upto.saturating_sub(self.window)..upto];
        let n = window.len() as f64;
        let mean = window.iter().map(|e| e.reward).sum::<f64>() / n;
        let var = window.iter().map(|e| (e.reward - mean).powi(2)).sum::<f64>() / n;
        let agents = window.first().map_or(0, |e| e.agent_rewards.len());
        let agent_means = (0..agents)
            .map(|a| window.iter().map(|e| e.agent_rewards[a]).sum::<f64>() / n)
            .collect();
        self.curve.rows.push(CurveRow {
            timestep: boundary,
            mean_reward: mean,
            std_reward: var.sqrt(),
            completion_rate: window.iter().filter(|e| e.terminated).count() as f64 / n,
            mean_objective: window.iter().map(|e| e.objective).sum::<f64>() / n,
            episodes: window.len(),
            agent_means,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(timestep: usize, reward: f64) -> EpisodeRecord {
        EpisodeRecord {
            timestep,
            reward,
            terminated: reward > 0.0,
            objective: 1.0,
            agent_rewards: vec![],
        }
    }

    #[test]
    fn window_and_boundaries() {
        let mut t = CurveTracker::new(10, 2);
        t.record(ep(3, 1.0));
        t.record(ep(9, -1.0));
        t.record(ep(10, 3.0));
        t.record(ep(12, 5.0));
        t.advance(15);
        let c = t.finish(25);
        let ts: Vec<usize> = c.rows.iter().map(|r| r.timestep).collect();
        assert_eq!(ts, vec![10, 20, 25]);
        // Boundary 10 sees the last two episodes ending at or before it.
        assert_eq!(c.rows[0].mean_reward, 1.0);
        assert_eq!(c.rows[0].completion_rate, 0.5);
        assert_eq!(c.rows[1].mean_reward, 4.0);
        assert!(c.to_csv().starts_with(CURVE_HEADER));
    }

    #[test]
    fn empty_window_is_nan() {
        let c = CurveTracker::new(10, 5).finish(10);
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].episodes, 0);
        assert!(c.rows[0].mean_reward.is_nan());
    }
}
