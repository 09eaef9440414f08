//! Single-agent decision environment.
//!
//! Each decision step the agent sees a fixed-width job slot and either assigns
//! one slot job to one machine or does nothing. Doing nothing moves the clock
//! to the next machine completion. The action space has `S·M + 1` entries:
//! index `m·S + s` assigns the job in slot `s` to machine `m`, index `S·M` is
//! do-nothing.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::ProblemInstance;
use crate::metrics::{Assignment, ScheduleRecord};
use crate::multi_env::allocate_workers_greedy;
use crate::Time;

/// Number of features per (machine, slot) pair.
pub const FEATURES_PER_PAIR: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("instance is invalid: {0}")]
    InvalidInstance(String),
    #[error("configuration is invalid: {0}")]
    InvalidConfig(String),
    #[error("episode already finished; call reset")]
    EpisodeOver,
    #[error("action index {index} outside action space of size {size}")]
    ActionOutOfRange { index: usize, size: usize },
    #[error("job {job} cannot run on machine {machine}")]
    Ineligible { job: usize, machine: usize },
    #[error("job {job} on machine {machine} needs {required} free compatible workers, {available} available")]
    InsufficientWorkers {
        job: usize,
        machine: usize,
        required: usize,
        available: usize,
    },
}

/// How a crew is picked among free compatible workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkerAllocation {
    /// Uniformly at random (seeded).
    #[default]
    Random,
    /// Least flexible workers first, then lowest id.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub job_slot_size: usize,
    /// Decision-step limit; `None` means `50 · J`.
    pub max_decision_steps: Option<usize>,
    pub inaction_threshold: u32,
    /// Divisor for every time-valued observation feature.
    pub time_scale: f64,
    pub worker_allocation: WorkerAllocation,
    pub seed: u64,
}

impl EnvConfig {
    pub fn new(job_slot_size: usize) -> Self {
        EnvConfig {
            job_slot_size,
            max_decision_steps: None,
            inaction_threshold: 3,
            time_scale: 50.0,
            worker_allocation: WorkerAllocation::Random,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn step_limit(&self, jobs: usize) -> usize {
        self.max_decision_steps.unwrap_or(50 * jobs)
    }

    fn check(&self) -> Result<(), EnvError> {
        if self.job_slot_size == 0 {
            return Err(EnvError::InvalidConfig("job_slot_size must be positive".into()));
        }
        if self.max_decision_steps == Some(0) {
            return Err(EnvError::InvalidConfig("max_decision_steps must be positive".into()));
        }
        if self.inaction_threshold == 0 {
            return Err(EnvError::InvalidConfig("inaction_threshold must be positive".into()));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(EnvError::InvalidConfig("time_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occupancy {
    pub job: usize,
    pub end: Time,
    pub workers: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineStatus {
    /// `Some` while the machine is busy.
    pub busy: Option<Occupancy>,
    pub last_completed_job: Option<usize>,
    pub total_scheduled_time: Time,
}

impl MachineStatus {
    pub fn is_idle(&self) -> bool {
        self.busy.is_none()
    }
}

/// Where a job currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobPhase {
    Backlog,
    Slot,
    InProcess,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub clock: Time,
    pub machines: Vec<MachineStatus>,
    pub worker_free: Vec<bool>,
    pub job_slot: Vec<Option<usize>>,
    pub backlog: VecDeque<usize>,
    pub phase: Vec<JobPhase>,
    pub consecutive_do_nothing: u32,
    pub consecutive_empty_slot: u32,
    pub decision_step: usize,
    pub schedule: ScheduleRecord,
    pub terminated: bool,
    pub truncated: bool,
}

impl EnvState {
    fn initial(instance: &ProblemInstance, slot_size: usize) -> Self {
        let job_slot = (0..slot_size).map(|s| (s < instance.jobs).then_some(s)).collect();
        let backlog = (slot_size.min(instance.jobs)..instance.jobs).collect();
        let phase = (0..instance.jobs)
            .map(|j| if j < slot_size { JobPhase::Slot } else { JobPhase::Backlog })
            .collect();
        EnvState {
            clock: 0,
            machines: vec![MachineStatus::default(); instance.machines],
            worker_free: vec![true; instance.workers],
            job_slot,
            backlog,
            phase,
            consecutive_do_nothing: 0,
            consecutive_empty_slot: 0,
            decision_step: 0,
            schedule: ScheduleRecord::default(),
            terminated: false,
            truncated: false,
        }
    }

    pub fn is_done(&self) -> bool {
        self.terminated || self.truncated
    }

    /// Jobs that are in process or finished.
    pub fn scheduled_count(&self) -> usize {
        self.phase
            .iter()
            .filter(|p| matches!(p, JobPhase::InProcess | JobPhase::Finished))
            .count()
    }

    /// Equality of everything except the per-agent bookkeeping counters.
    pub fn same_simulation(&self, other: &EnvState) -> bool {
        self.clock == other.clock
            && self.machines == other.machines
            && self.worker_free == other.worker_free
            && self.job_slot == other.job_slot
            && self.backlog == other.backlog
            && self.phase == other.phase
            && self.decision_step == other.decision_step
            && self.schedule == other.schedule
            && self.terminated == other.terminated
            && self.truncated == other.truncated
    }

    /// Checks job partition, worker conservation and machine occupancy
    /// invariants. Returns a description of the first violation.
    pub fn check_invariants(&self, instance: &ProblemInstance) -> Result<(), String> {
        let j = instance.jobs;
        let mut seen = vec![0u32; j];
        for &job in self.job_slot.iter().flatten() {
            seen[job] += 1;
            if self.phase[job] != JobPhase::Slot {
                return Err(format!("job {job} in slot but phase {:?}", self.phase[job]));
            }
        }
        for &job in &self.backlog {
            seen[job] += 1;
            if self.phase[job] != JobPhase::Backlog {
                return Err(format!("job {job} in backlog but phase {:?}", self.phase[job]));
            }
        }
        let mut worker_owner = vec![None; instance.workers];
        for (m, status) in self.machines.iter().enumerate() {
            let mut expected_total = 0;
            let mut last_end = 0;
            for a in self.schedule.machine_sequence(m) {
                if a.start < last_end {
                    return Err(format!("machine {m} has overlapping assignments"));
                }
                last_end = a.end();
                expected_total += a.duration();
            }
            if expected_total != status.total_scheduled_time {
                return Err(format!("machine {m} total_scheduled_time mismatch"));
            }
            if let Some(occ) = &status.busy {
                seen[occ.job] += 1;
                if self.phase[occ.job] != JobPhase::InProcess {
                    return Err(format!("job {} running but phase {:?}", occ.job, self.phase[occ.job]));
                }
                if occ.end <= self.clock {
                    return Err(format!("machine {m} busy past its occupancy end"));
                }
                if Some(occ.workers.len() as u32) != instance.workforce(occ.job, m) {
                    return Err(format!("machine {m} crew size differs from requirement"));
                }
                for &w in &occ.workers {
                    if !instance.compatible(w, m) {
                        return Err(format!("worker {w} not compatible with machine {m}"));
                    }
                    if worker_owner[w].replace(m).is_some() {
                        return Err(format!("worker {w} on two machines"));
                    }
                }
            }
        }
        for w in 0..instance.workers {
            if self.worker_free[w] != worker_owner[w].is_none() {
                return Err(format!("worker {w} availability flag inconsistent"));
            }
        }
        for job in 0..j {
            if self.phase[job] == JobPhase::Finished {
                seen[job] += 1;
            }
            if seen[job] != 1 {
                return Err(format!("job {job} appears {} times across slot/backlog/process/finished", seen[job]));
            }
            let count = self.schedule.assignments.iter().filter(|a| a.job == job).count();
            let scheduled = matches!(self.phase[job], JobPhase::InProcess | JobPhase::Finished);
            if count != usize::from(scheduled) {
                return Err(format!("job {job} has {count} schedule entries"));
            }
        }
        if self.terminated && (self.truncated || self.schedule.len() != j) {
            return Err("terminated without every job scheduled exactly once".into());
        }
        Ok(())
    }
}

/// Flat action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoded {
    Assign { machine: usize, slot: usize },
    DoNothing,
}

impl Action {
    pub fn assign(machine: usize, slot: usize, slot_size: usize) -> Action {
        Action(machine * slot_size + slot)
    }

    pub fn do_nothing(slot_size: usize, machines: usize) -> Action {
        Action(slot_size * machines)
    }

    pub fn decode(self, slot_size: usize, machines: usize) -> Option<Decoded> {
        let n = slot_size * machines;
        match self.0 {
            i if i < n => Some(Decoded::Assign {
                machine: i / slot_size,
                slot: i % slot_size,
            }),
            i if i == n => Some(Decoded::DoNothing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask(pub Vec<bool>);

impl ActionMask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// True when some entry other than the trailing do-nothing is valid.
    pub fn any_assignment(&self) -> bool {
        self.0[..self.0.len() - 1].iter().any(|&b| b)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// Classification of an action against the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// `alternatives` is true when some assignment was feasible.
    DoNothing { alternatives: bool },
    /// Empty slot position or a job that cannot run on the machine.
    Null,
    Infeasible,
    Feasible,
}

/// Every reward term, kept separately for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub do_nothing: f64,
    pub null_action: f64,
    pub infeasible: f64,
    pub feasible: f64,
    pub time_bonus: f64,
    pub time_penalty: f64,
    pub resource_bonus: f64,
    pub resource_penalty: f64,
    pub inaction_malus: f64,
    pub empty_slot_malus: f64,
    pub conflict_malus: f64,
}

impl RewardComponents {
    pub fn total(&self) -> f64 {
        self.do_nothing
            + self.null_action
            + self.infeasible
            + self.feasible
            + self.time_bonus
            + self.time_penalty
            + self.resource_bonus
            + self.resource_penalty
            + self.inaction_malus
            + self.empty_slot_malus
            + self.conflict_malus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub action_index: usize,
    /// `(job, machine, slot)` for assignment actions that hit a slot job.
    pub pair: Option<(usize, usize, usize)>,
    pub verdict: Verdict,
    pub components: RewardComponents,
    /// Valid entries in the mask the action was chosen from.
    pub mask_popcount: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// One line of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogRecord {
    pub decision_step: usize,
    pub clock: Time,
    pub action_index: usize,
    pub pair: Option<(usize, usize, usize)>,
    pub verdict: Verdict,
    pub reward: f64,
    pub components: RewardComponents,
    pub mask_popcount: usize,
}

impl EpisodeLogRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log record serializes")
    }
}

/// Running objective terms maintained step by step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub makespan: Time,
    pub utilization: Time,
    pub performed: usize,
}

#[derive(Debug, Clone)]
pub struct Env {
    instance: Arc<ProblemInstance>,
    config: EnvConfig,
    state: EnvState,
    rng: ChaCha8Rng,
    tally: Tally,
    /// Least flexible first, then by id. Precomputed for greedy crews.
    flexibility_order: Vec<usize>,
}

impl Env {
    pub fn new(instance: Arc<ProblemInstance>, config: EnvConfig) -> Result<Self, EnvError> {
        config.check()?;
        let report = instance.validate();
        if !report.is_empty() {
            return Err(EnvError::InvalidInstance(report.to_string()));
        }
        let mut flexibility_order: Vec<usize> = (0..instance.workers).collect();
        flexibility_order.sort_by_key(|&w| (instance.flexibility(w), w));
        Ok(Env {
            state: EnvState::initial(&instance, config.job_slot_size),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            tally: Tally::default(),
            flexibility_order,
            instance,
            config,
        })
    }

    /// Restarts the episode on the same instance and seed.
    pub fn reset(&mut self) -> (Vec<f64>, ActionMask) {
        self.state = EnvState::initial(&self.instance, self.config.job_slot_size);
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.tally = Tally::default();
        (self.observe(), self.action_mask())
    }

    /// Restarts on a new instance (same shape) with a new worker-selection seed.
    pub fn reset_with(&mut self, instance: Arc<ProblemInstance>, seed: u64) -> Result<(Vec<f64>, ActionMask), EnvError> {
        if instance.machines != self.instance.machines {
            return Err(EnvError::InvalidInstance("machine count changed between episodes".into()));
        }
        let report = instance.validate();
        if !report.is_empty() {
            return Err(EnvError::InvalidInstance(report.to_string()));
        }
        self.flexibility_order = (0..instance.workers).collect();
        self.flexibility_order.sort_by_key(|&w| (instance.flexibility(w), w));
        self.instance = instance;
        self.config.seed = seed;
        Ok(self.reset())
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn instance_arc(&self) -> &Arc<ProblemInstance> {
        &self.instance
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn tally(&self) -> Tally {
        self.tally
    }

    pub fn slot_size(&self) -> usize {
        self.config.job_slot_size
    }

    pub fn machines(&self) -> usize {
        self.instance.machines
    }

    pub fn action_count(&self) -> usize {
        self.slot_size() * self.machines() + 1
    }

    pub fn observation_len(&self) -> usize {
        FEATURES_PER_PAIR * self.slot_size() * self.machines()
    }

    pub fn do_nothing(&self) -> Action {
        Action::do_nothing(self.slot_size(), self.machines())
    }

    pub fn is_done(&self) -> bool {
        self.state.is_done()
    }

    pub fn free_compatible(&self, machine: usize) -> usize {
        (0..self.instance.workers)
            .filter(|&w| self.state.worker_free[w] && self.instance.compatible(w, machine))
            .count()
    }

    /// Idle machine, eligible pair and enough free compatible workers.
    pub fn feasible(&self, job: usize, machine: usize) -> bool {
        self.state.machines[machine].is_idle()
            && match self.instance.workforce(job, machine) {
                Some(r) => self.free_compatible(machine) >= r as usize,
                None => false,
            }
    }

    /// Processing time plus the setup from the machine's last completed job
    /// (zero on a machine that has not run anything).
    pub fn total_time(&self, job: usize, machine: usize) -> Result<Time, EnvError> {
        let pt = self
            .instance
            .processing(job, machine)
            .ok_or(EnvError::Ineligible { job, machine })?;
        let setup = self.state.machines[machine]
            .last_completed_job
            .map_or(0, |prev| self.instance.setup(prev, job, machine));
        Ok(pt + setup)
    }

    pub fn action_mask(&self) -> ActionMask {
        let (s_len, m_len) = (self.slot_size(), self.machines());
        let mut mask = vec![false; s_len * m_len + 1];
        for m in 0..m_len {
            if !self.state.machines[m].is_idle() {
                continue;
            }
            for s in 0..s_len {
                if let Some(job) = self.state.job_slot[s] {
                    mask[m * s_len + s] = self.feasible(job, m);
                }
            }
        }
        mask[s_len * m_len] = true;
        ActionMask(mask)
    }

    pub fn any_feasible(&self) -> bool {
        (0..self.machines()).any(|m| self.machine_has_feasible(m))
    }

    pub fn machine_has_feasible(&self, machine: usize) -> bool {
        self.state.machines[machine].is_idle()
            && self
                .state
                .job_slot
                .iter()
                .flatten()
                .any(|&job| self.feasible(job, machine))
    }

    /// Five features for every (machine, slot) pair in machine-major order.
    pub fn observe(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.observation_len());
        for m in 0..self.machines() {
            self.observe_machine_into(m, &mut out);
        }
        out
    }

    /// The `5·S` features of one machine, as seen by that machine's agent.
    pub fn observe_machine(&self, machine: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(FEATURES_PER_PAIR * self.slot_size());
        self.observe_machine_into(machine, &mut out);
        out
    }

    fn observe_machine_into(&self, m: usize, out: &mut Vec<f64>) {
        let scale = self.config.time_scale;
        let workers = self.instance.workers as f64;
        let status = &self.state.machines[m];
        let remaining = status
            .busy
            .as_ref()
            .map_or(0, |occ| occ.end.saturating_sub(self.state.clock));
        let available = self.free_compatible(m) as f64;
        let scheduled = status.total_scheduled_time as f64;
        for s in 0..self.slot_size() {
            out.push(remaining as f64 / scale);
            out.push(available / workers);
            out.push(scheduled / scale);
            match self.state.job_slot[s].filter(|&j| self.instance.is_eligible(j, m)) {
                Some(job) => {
                    out.push(self.total_time(job, m).unwrap() as f64 / scale);
                    out.push(self.instance.workforce(job, m).unwrap() as f64 / workers);
                }
                None => {
                    out.push(0.0);
                    out.push(0.0);
                }
            }
        }
    }

    pub fn classify(&self, action: Action) -> Result<Verdict, EnvError> {
        let decoded = action
            .decode(self.slot_size(), self.machines())
            .ok_or(EnvError::ActionOutOfRange {
                index: action.0,
                size: self.action_count(),
            })?;
        Ok(match decoded {
            Decoded::DoNothing => Verdict::DoNothing {
                alternatives: self.any_feasible(),
            },
            Decoded::Assign { machine, slot } => self.classify_pair(self.state.job_slot[slot], machine),
        })
    }

    pub(crate) fn classify_pair(&self, job: Option<usize>, machine: usize) -> Verdict {
        match job {
            None => Verdict::Null,
            Some(job) if !self.instance.is_eligible(job, machine) => Verdict::Null,
            Some(job) if self.feasible(job, machine) => Verdict::Feasible,
            Some(_) => Verdict::Infeasible,
        }
    }

    /// Counter values after taking an action with this verdict.
    pub(crate) fn advance_counters(counters: (u32, u32), verdict: Verdict) -> (u32, u32) {
        let (idle, empty) = counters;
        match verdict {
            Verdict::DoNothing { alternatives: true } => (idle + 1, 0),
            Verdict::DoNothing { alternatives: false } => (0, 0),
            Verdict::Null => (0, empty + 1),
            Verdict::Infeasible | Verdict::Feasible => (0, 0),
        }
    }

    /// Reward ledger for `action` judged as `verdict` in the current state,
    /// including the corrective maluses implied by the current counters.
    pub fn compute_reward(&self, action: Action, verdict: Verdict) -> RewardComponents {
        let counters = (self.state.consecutive_do_nothing, self.state.consecutive_empty_slot);
        let pair = match action.decode(self.slot_size(), self.machines()) {
            Some(Decoded::Assign { machine, slot }) => self.state.job_slot[slot].map(|job| (job, machine)),
            _ => None,
        };
        self.reward_for(pair, verdict, counters)
    }

    pub(crate) fn reward_for(&self, pair: Option<(usize, usize)>, verdict: Verdict, counters: (u32, u32)) -> RewardComponents {
        let mut c = RewardComponents::default();
        let (idle, empty) = Self::advance_counters(counters, verdict);
        match verdict {
            Verdict::DoNothing { alternatives } => {
                c.do_nothing = if alternatives { -0.5 } else { 0.5 };
                if idle > self.config.inaction_threshold {
                    c.inaction_malus = -10.0;
                }
            }
            Verdict::Null => {
                c.null_action = -0.5;
                if empty > 1 {
                    c.empty_slot_malus = -1.0;
                }
            }
            Verdict::Infeasible => c.infeasible = -1.0,
            Verdict::Feasible => {
                let (job, machine) = pair.expect("feasible verdict carries a pair");
                c.feasible = 1.0;
                let tt = self.total_time(job, machine).unwrap();
                let r = self.instance.workforce(job, machine).unwrap();
                let min_tt = self
                    .instance
                    .eligible_machines(job)
                    .map(|m| self.total_time(job, m).unwrap())
                    .min()
                    .unwrap();
                let min_r = self
                    .instance
                    .eligible_machines(job)
                    .map(|m| self.instance.workforce(job, m).unwrap())
                    .min()
                    .unwrap();
                if tt == min_tt {
                    c.time_bonus = 2.0;
                } else {
                    c.time_penalty = -((tt - min_tt) as f64) / 4.0;
                }
                if r == min_r {
                    c.resource_bonus = 2.0;
                } else {
                    c.resource_penalty = -((r - min_r) as f64) / 4.0;
                }
            }
        }
        c
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.state.is_done() {
            return Err(EnvError::EpisodeOver);
        }
        let mask_popcount = self.action_mask().popcount();
        let verdict = self.classify(action)?;
        let components = self.compute_reward(action, verdict);
        let decoded = action.decode(self.slot_size(), self.machines()).unwrap();
        let pair = match decoded {
            Decoded::Assign { machine, slot } => self.state.job_slot[slot].map(|job| (job, machine, slot)),
            Decoded::DoNothing => None,
        };
        let counters = Self::advance_counters(
            (self.state.consecutive_do_nothing, self.state.consecutive_empty_slot),
            verdict,
        );
        (self.state.consecutive_do_nothing, self.state.consecutive_empty_slot) = counters;

        match (verdict, pair) {
            (Verdict::Feasible, Some((job, machine, slot))) => {
                let workers = self.pick_workers(job, machine)?;
                self.assign(job, machine, slot, workers);
            }
            (Verdict::DoNothing { .. }, _) => self.advance_clock(),
            _ => {}
        }
        self.finish_decision();

        Ok(StepOutcome {
            observation: self.observe(),
            reward: components.total(),
            terminated: self.state.terminated,
            truncated: self.state.truncated,
            info: StepInfo {
                action_index: action.0,
                pair,
                verdict,
                components,
                mask_popcount,
            },
        })
    }

    pub fn log_record(&self, outcome: &StepOutcome) -> EpisodeLogRecord {
        EpisodeLogRecord {
            decision_step: self.state.decision_step,
            clock: self.state.clock,
            action_index: outcome.info.action_index,
            pair: outcome.info.pair,
            verdict: outcome.info.verdict,
            reward: outcome.reward,
            components: outcome.info.components,
            mask_popcount: outcome.info.mask_popcount,
        }
    }

    pub(crate) fn pick_workers(&mut self, job: usize, machine: usize) -> Result<Vec<usize>, EnvError> {
        match self.config.worker_allocation {
            WorkerAllocation::Greedy => self.greedy_workers(job, machine),
            WorkerAllocation::Random => {
                let pool: Vec<usize> = (0..self.instance.workers)
                    .filter(|&w| self.state.worker_free[w] && self.instance.compatible(w, machine))
                    .collect();
                let need = self.instance.workforce(job, machine).ok_or(EnvError::Ineligible { job, machine })? as usize;
                if pool.len() < need {
                    return Err(EnvError::InsufficientWorkers {
                        job,
                        machine,
                        required: need,
                        available: pool.len(),
                    });
                }
                let mut crew: Vec<usize> = sample(&mut self.rng, pool.len(), need)
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                crew.sort_unstable();
                Ok(crew)
            }
        }
    }

    pub(crate) fn greedy_workers(&self, job: usize, machine: usize) -> Result<Vec<usize>, EnvError> {
        allocate_workers_greedy(&self.instance, &self.state, &self.flexibility_order, job, machine)
    }

    /// Starts `job` on `machine` with `workers`. Caller guarantees feasibility.
    pub(crate) fn assign(&mut self, job: usize, machine: usize, slot: usize, workers: Vec<usize>) {
        let pt = self.instance.processing(job, machine).unwrap();
        let setup = self.total_time(job, machine).unwrap() - pt;
        let duration = setup + pt;
        let start = self.state.clock;

        self.state.job_slot[slot] = self.state.backlog.pop_front();
        if let Some(next) = self.state.job_slot[slot] {
            self.state.phase[next] = JobPhase::Slot;
        }
        let status = &mut self.state.machines[machine];
        status.total_scheduled_time += duration;
        if duration == 0 {
            status.last_completed_job = Some(job);
            self.state.phase[job] = JobPhase::Finished;
        } else {
            for &w in &workers {
                self.state.worker_free[w] = false;
            }
            status.busy = Some(Occupancy {
                job,
                end: start + duration,
                workers: workers.clone(),
            });
            self.state.phase[job] = JobPhase::InProcess;
        }
        self.tally.makespan = self.tally.makespan.max(start + duration);
        self.tally.utilization += workers.len() as Time * duration;
        self.tally.performed += 1;
        self.state.schedule.push(Assignment {
            job,
            machine,
            start,
            setup,
            processing: pt,
            workers,
        });
    }

    /// Jumps to the earliest completion and releases every machine finishing then.
    pub(crate) fn advance_clock(&mut self) {
        let next = self
            .state
            .machines
            .iter()
            .filter_map(|m| m.busy.as_ref().map(|o| o.end))
            .min();
        if let Some(t) = next {
            self.release_until(t);
        }
    }

    fn release_until(&mut self, t: Time) {
        self.state.clock = self.state.clock.max(t);
        for status in &mut self.state.machines {
            if status.busy.as_ref().is_some_and(|o| o.end <= t) {
                let occ = status.busy.take().unwrap();
                for w in occ.workers {
                    self.state.worker_free[w] = true;
                }
                status.last_completed_job = Some(occ.job);
                self.state.phase[occ.job] = JobPhase::Finished;
            }
        }
    }

    /// Bumps the decision counter and settles termination or truncation.
    /// Once every job is scheduled the remaining work is drained so the
    /// terminal state has all jobs finished.
    pub(crate) fn finish_decision(&mut self) {
        self.state.decision_step += 1;
        if self.state.scheduled_count() == self.instance.jobs {
            if let Some(t) = self
                .state
                .machines
                .iter()
                .filter_map(|m| m.busy.as_ref().map(|o| o.end))
                .max()
            {
                self.release_until(t);
            }
            self.state.terminated = true;
        } else if self.state.decision_step >= self.config.step_limit(self.instance.jobs) {
            self.state.truncated = true;
        }
    }

    #[cfg(test)]
    pub(crate) fn state_mut(&mut self) -> &mut EnvState {
        &mut self.state
    }
}
