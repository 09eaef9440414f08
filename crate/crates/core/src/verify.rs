//! Independent checkers for simulator invariants.
//!
//! These re-derive facts from first principles instead of trusting the
//! environment's bookkeeping. The test suites and the acceptance harness drive
//! them over many random episodes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, Env, EnvConfig, EnvError, Verdict, WorkerAllocation};
use crate::instance::ProblemInstance;
use crate::metrics::{parse_gantt, write_gantt, LaneKind, ScheduleRecord};
use crate::multi_env::MultiEnv;

/// Every assignment matches the instance tables, machines and workers are
/// never double-booked, and no job appears twice.
pub fn check_schedule(instance: &ProblemInstance, schedule: &ScheduleRecord) -> Result<(), String> {
    let mut jobs = vec![false; instance.jobs];
    for a in &schedule.assignments {
        if std::mem::replace(&mut jobs[a.job], true) {
            return Err(format!("job {} scheduled twice", a.job));
        }
        if instance.processing(a.job, a.machine) != Some(a.processing) {
            return Err(format!("job {} on machine {}: wrong processing time", a.job, a.machine));
        }
        if instance.workforce(a.job, a.machine) != Some(a.workers.len() as u32) {
            return Err(format!("job {} on machine {}: wrong crew size", a.job, a.machine));
        }
        if let Some(w) = a.workers.iter().find(|&&w| !instance.compatible(w, a.machine)) {
            return Err(format!("worker {w} is not compatible with machine {}", a.machine));
        }
    }
    for m in 0..instance.machines {
        let mut prev: Option<(usize, u64)> = None;
        for a in schedule.machine_sequence(m) {
            let expected_setup = prev.map_or(0, |(job, _)| instance.setup(job, a.job, m));
            if a.setup != expected_setup {
                return Err(format!("job {} on machine {m}: setup {} expected {expected_setup}", a.job, a.setup));
            }
            if prev.is_some_and(|(_, end)| a.start < end) {
                return Err(format!("machine {m} runs two jobs at once"));
            }
            prev = Some((a.job, a.end()));
        }
    }
    for w in 0..instance.workers {
        let mut spans: Vec<(u64, u64)> = schedule
            .assignments
            .iter()
            .filter(|a| a.workers.contains(&w))
            .map(|a| (a.start, a.end()))
            .collect();
        spans.sort_unstable();
        if spans.windows(2).any(|p| p[1].0 < p[0].1) {
            return Err(format!("worker {w} is on two crews at once"));
        }
    }
    Ok(())
}

/// The mask admits exactly the feasible assignments, plus do-nothing.
pub fn check_mask(env: &Env) -> Result<(), String> {
    let mask = env.action_mask();
    if mask.len() != env.action_count() {
        return Err("mask length differs from action count".into());
    }
    if !mask.0[env.do_nothing().0] {
        return Err("do-nothing is masked out".into());
    }
    for i in 0..env.do_nothing().0 {
        let verdict = env.classify(Action(i)).map_err(|e| e.to_string())?;
        if mask.0[i] != (verdict == Verdict::Feasible) {
            return Err(format!("action {i}: mask {} but verdict {verdict:?}", mask.0[i]));
        }
    }
    if mask.any_assignment() != env.any_feasible() {
        return Err("mask and any_feasible disagree".into());
    }
    Ok(())
}

/// Takes every assignment action on a copy of `env`: mask-true ones must
/// schedule their job, mask-false ones must take the infeasible or null branch
/// and leave the simulation untouched. Returns the number of actions tried.
pub fn check_mask_by_stepping(env: &Env) -> Result<usize, String> {
    let mask = env.action_mask();
    for i in 0..env.do_nothing().0 {
        let mut probe = env.clone();
        let before = probe.state().scheduled_count();
        let out = probe.step(Action(i)).map_err(|e| format!("action {i}: {e}"))?;
        let c = out.info.components;
        if mask.0[i] {
            if out.info.verdict != Verdict::Feasible || c.feasible != 1.0 {
                return Err(format!("mask-true action {i} was not applied: {:?}", out.info.verdict));
            }
            if probe.state().scheduled_count() != before + 1 {
                return Err(format!("mask-true action {i} did not schedule its job"));
            }
        } else {
            let penalised = match out.info.verdict {
                Verdict::Infeasible => c.infeasible == -1.0,
                Verdict::Null => c.null_action == -0.5,
                _ => false,
            };
            if !penalised || c.feasible != 0.0 {
                return Err(format!("mask-false action {i} gave {:?} with {c:?}", out.info.verdict));
            }
            if probe.state().schedule != env.state().schedule || probe.state().clock != env.state().clock {
                return Err(format!("mask-false action {i} changed the simulation"));
            }
        }
    }
    Ok(env.do_nothing().0)
}

/// Random-walks `env` (restarting finished episodes) and applies
/// [`check_mask_by_stepping`] to `states` visited states.
pub fn mask_soundness_walk(env: &mut Env, seed: u64, states: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tried = 0;
    for n in 0..states {
        if env.is_done() {
            env.reset();
        }
        tried += check_mask_by_stepping(env).map_err(|e| format!("state {n}: {e}"))?;
        let action = if rng.gen_bool(0.7) {
            let mask = env.action_mask();
            let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask.0[i]).collect();
            valid[rng.gen_range(0..valid.len())]
        } else {
            rng.gen_range(0..env.action_count())
        };
        env.step(Action(action)).map_err(|e| e.to_string())?;
    }
    Ok(tried)
}

/// Running tallies agree with the schedule, and the Gantt export round-trips.
pub fn check_metrics(env: &Env) -> Result<(), String> {
    let schedule = &env.state().schedule;
    let tally = env.tally();
    if tally.makespan != schedule.makespan()
        || tally.utilization != schedule.utilization()
        || tally.performed != schedule.performed()
    {
        return Err(format!("tally {tally:?} disagrees with the schedule"));
    }
    let rows = parse_gantt(&write_gantt(schedule))?;
    let machine_rows = rows.iter().filter(|r| r.kind == LaneKind::Machine).count();
    let worker_rows = rows.iter().filter(|r| r.kind == LaneKind::Worker).count();
    let crew_total: usize = schedule.assignments.iter().map(|a| a.workers.len()).sum();
    if machine_rows != schedule.len() || worker_rows != crew_total {
        return Err("gantt rows do not cover the schedule".into());
    }
    if rows.iter().map(|r| r.end).max().unwrap_or(0) != schedule.makespan() {
        return Err("gantt horizon differs from makespan".into());
    }
    Ok(())
}

/// What a checked episode visited.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckedEpisode {
    pub steps: usize,
    pub terminated: bool,
    /// States whose mask was verified.
    pub masks_checked: usize,
}

/// Plays `env` to the end with actions from `choose`, checking state, mask,
/// clock and metric invariants after every step.
pub fn checked_episode(env: &mut Env, mut choose: impl FnMut(&Env) -> usize) -> Result<CheckedEpisode, String> {
    let mut out = CheckedEpisode::default();
    let check_all = |env: &Env| -> Result<(), String> {
        env.state().check_invariants(env.instance())?;
        check_mask(env)?;
        check_metrics(env)?;
        check_schedule(env.instance(), &env.state().schedule)
    };
    check_all(env)?;
    out.masks_checked += 1;
    while !env.is_done() {
        let clock = env.state().clock;
        let action = choose(env);
        let outcome = env.step(Action(action)).map_err(|e| format!("step {}: {e}", out.steps))?;
        if !outcome.reward.is_finite() {
            return Err("non-finite reward".into());
        }
        out.steps += 1;
        if env.state().clock < clock {
            return Err(format!("clock went back from {clock} to {}", env.state().clock));
        }
        check_all(env).map_err(|e| format!("after step {} (action {action}): {e}", out.steps))?;
        out.masks_checked += 1;
    }
    out.terminated = env.state().terminated;
    Ok(out)
}

/// [`checked_episode`] with a seeded mix of masked and unrestricted random
/// actions. `masked_share` is the probability of drawing from the mask.
pub fn checked_random_episode(
    instance: Arc<ProblemInstance>,
    config: EnvConfig,
    seed: u64,
    masked_share: f64,
) -> Result<CheckedEpisode, String> {
    let mut env = Env::new(instance, config.with_seed(seed)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    checked_episode(&mut env, |env| {
        if rng.gen::<f64>() < masked_share {
            let mask = env.action_mask();
            let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask.0[i]).collect();
            valid[rng.gen_range(0..valid.len())]
        } else {
            rng.gen_range(0..env.action_count())
        }
    })
}

/// Drives a single-agent environment and a multi-agent one in lockstep, with
/// one agent mirroring each single-agent assignment and every other agent
/// doing nothing. Returns the number of compared steps.
pub fn check_one_actor_equivalence(
    instance: Arc<ProblemInstance>,
    mut config: EnvConfig,
    seed: u64,
    max_steps: usize,
) -> Result<usize, String> {
    config.worker_allocation = WorkerAllocation::Greedy;
    let err = |e: EnvError| e.to_string();
    let mut single = Env::new(instance.clone(), config.clone()).map_err(err)?;
    let mut multi = MultiEnv::new(instance, config).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (slots, idle) = (single.slot_size(), multi.agent_do_nothing());
    let mut steps = 0;
    while steps < max_steps && !single.is_done() {
        let mask = single.action_mask();
        let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask.0[i]).collect();
        let a = if rng.gen_bool(0.8) {
            valid[rng.gen_range(0..valid.len())]
        } else {
            rng.gen_range(0..single.action_count())
        };
        let mut joint = vec![idle; multi.agent_count()];
        if a != single.do_nothing().0 {
            joint[a / slots] = a % slots;
        }
        let s_out = single.step(Action(a)).map_err(err)?;
        let m_out = multi.joint_step(&joint).map_err(err)?;
        steps += 1;
        if !single.state().same_simulation(multi.state()) {
            return Err(format!("states diverge after step {steps} (action {a})"));
        }
        if a != single.do_nothing().0 && s_out.info.verdict != m_out.agents[a / slots].verdict {
            return Err(format!("verdicts diverge after step {steps}"));
        }
        if !m_out.conflicts.contests.is_empty() {
            return Err("one acting agent produced a conflict".into());
        }
        if multi.is_done() != single.is_done() {
            return Err("termination diverges".into());
        }
    }
    Ok(steps)
}
