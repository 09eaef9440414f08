//! Exhaustive optimal scheduling for tiny instances.
//!
//! The search enumerates, at every decision instant, which idle machine starts
//! which unscheduled job with which crew, or moves the clock to the next
//! completion event. For regular objectives an optimal schedule exists in
//! which every job starts at time zero or at some completion time, so
//! restricting starts to event times loses nothing. Free workers with the same
//! compatibility row are interchangeable, so crews are enumerated as counts
//! per compatibility class.
//!
//! Starts at one instant are generated in non-decreasing machine order, which
//! removes permutation duplicates. Branches are explored depth-first in a
//! fixed order (machines, then jobs, then crews, then advancing the clock) and
//! the incumbent is only replaced on strict improvement, so ties resolve to the
//! lexicographically first decision sequence.

use serde::{Deserialize, Serialize};

use super::{Assignment, ObjectiveWeights, ScheduleRecord, TimeMeasure};
use crate::instance::ProblemInstance;
use crate::Time;

pub const ORACLE_MAX_JOBS: usize = 6;
pub const ORACLE_MAX_MACHINES: usize = 3;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OracleError {
    #[error(
        "instance too large for exhaustive search: {jobs} jobs and {machines} machines (limit {ORACLE_MAX_JOBS} jobs, {ORACLE_MAX_MACHINES} machines)"
    )]
    TooLarge { jobs: usize, machines: usize },
    #[error("instance is invalid: {0}")]
    Invalid(String),
    #[error("no complete schedule exists")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OracleObjective {
    Makespan,
    TotalCompletion,
    Weighted {
        weights: ObjectiveWeights,
        measure: TimeMeasure,
    },
}

impl OracleObjective {
    fn value(&self, s: &Partial) -> f64 {
        match self {
            OracleObjective::Makespan => s.max_end as f64,
            OracleObjective::TotalCompletion => s.sum_end as f64,
            OracleObjective::Weighted { weights, measure } => {
                let t = match measure {
                    TimeMeasure::Makespan => s.max_end,
                    TimeMeasure::TotalCompletion => s.sum_end,
                };
                weights.w1 * t as f64 + weights.w2 * s.utilization as f64
                    - weights.w3 * s.schedule.len() as f64
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub schedule: ScheduleRecord,
    pub value: f64,
    /// Search nodes expanded.
    pub nodes: u64,
}

impl OracleSolution {
    pub fn makespan(&self) -> Time {
        self.schedule.makespan()
    }
}

struct Partial {
    clock: Time,
    machine_free_at: Vec<Time>,
    machine_last: Vec<Option<usize>>,
    worker_free_at: Vec<Time>,
    remaining: u32,
    min_machine: usize,
    max_end: Time,
    sum_end: Time,
    utilization: Time,
    schedule: Vec<Assignment>,
}

struct Search<'a> {
    inst: &'a ProblemInstance,
    objective: OracleObjective,
    /// Worker ids grouped by identical compatibility row, ordered by first id.
    classes: Vec<Vec<usize>>,
    best: Option<(f64, Vec<Assignment>)>,
    nodes: u64,
}

/// Finds a provably optimal complete schedule for `instance`.
///
/// Refuses instances with more than [`ORACLE_MAX_JOBS`] jobs or
/// [`ORACLE_MAX_MACHINES`] machines.
pub fn brute_force_optimal(
    instance: &ProblemInstance,
    objective: OracleObjective,
) -> Result<OracleSolution, OracleError> {
    if instance.jobs > ORACLE_MAX_JOBS || instance.machines > ORACLE_MAX_MACHINES {
        return Err(OracleError::TooLarge {
            jobs: instance.jobs,
            machines: instance.machines,
        });
    }
    let report = instance.validate();
    if !report.is_empty() {
        return Err(OracleError::Invalid(report.to_string()));
    }

    let mut classes: Vec<Vec<usize>> = Vec::new();
    for w in 0..instance.workers {
        match classes
            .iter_mut()
            .find(|c| instance.compatibility[c[0]] == instance.compatibility[w])
        {
            Some(c) => c.push(w),
            None => classes.push(vec![w]),
        }
    }

    let mut search = Search {
        inst: instance,
        objective,
        classes,
        best: None,
        nodes: 0,
    };
    let mut root = Partial {
        clock: 0,
        machine_free_at: vec![0; instance.machines],
        machine_last: vec![None; instance.machines],
        worker_free_at: vec![0; instance.workers],
        remaining: (1u32 << instance.jobs) - 1,
        min_machine: 0,
        max_end: 0,
        sum_end: 0,
        utilization: 0,
        schedule: Vec::with_capacity(instance.jobs),
    };
    search.dfs(&mut root);
    let nodes = search.nodes;
    match search.best {
        Some((value, assignments)) => Ok(OracleSolution {
            schedule: ScheduleRecord { assignments },
            value,
            nodes,
        }),
        None => Err(OracleError::Infeasible),
    }
}

impl Search<'_> {
    fn lower_bound(&self, s: &Partial) -> f64 {
        let inst = self.inst;
        let mut t_bound = s.max_end;
        let mut sum_bound = s.sum_end;
        let mut util_bound = s.utilization;
        for job in (0..inst.jobs).filter(|j| s.remaining & (1 << j) != 0) {
            let mut earliest = Time::MAX;
            let mut work = Time::MAX;
            for m in inst.eligible_machines(job) {
                let pt = inst.processing(job, m).unwrap();
                let r = inst.workforce(job, m).unwrap() as Time;
                earliest = earliest.min(s.clock.max(s.machine_free_at[m]) + pt);
                work = work.min(r * pt);
            }
            t_bound = t_bound.max(earliest);
            sum_bound += earliest;
            util_bound += work;
        }
        match self.objective {
            OracleObjective::Makespan => t_bound as f64,
            OracleObjective::TotalCompletion => sum_bound as f64,
            OracleObjective::Weighted { weights, measure } => {
                let t = match measure {
                    TimeMeasure::Makespan => t_bound,
                    TimeMeasure::TotalCompletion => sum_bound,
                };
                weights.w1 * t as f64 + weights.w2 * util_bound as f64
                    - weights.w3 * inst.jobs as f64
            }
        }
    }

    fn dfs(&mut self, s: &mut Partial) {
        self.nodes += 1;
        if s.remaining == 0 {
            let value = self.objective.value(s);
            if self.best.as_ref().is_none_or(|(b, _)| value < *b) {
                self.best = Some((value, s.schedule.clone()));
            }
            return;
        }
        if let Some((b, _)) = &self.best {
            if self.lower_bound(s) >= *b {
                return;
            }
        }
        let inst = self.inst;

        for m in s.min_machine..inst.machines {
            if s.machine_free_at[m] > s.clock {
                continue;
            }
            for job in 0..inst.jobs {
                if s.remaining & (1 << job) == 0 {
                    continue;
                }
                let (Some(pt), Some(r)) = (inst.processing(job, m), inst.workforce(job, m)) else {
                    continue;
                };
                let available: Vec<Vec<usize>> = self
                    .classes
                    .iter()
                    .map(|class| {
                        class
                            .iter()
                            .copied()
                            .filter(|&w| inst.compatible(w, m) && s.worker_free_at[w] <= s.clock)
                            .collect()
                    })
                    .collect();
                if available.iter().map(Vec::len).sum::<usize>() < r as usize {
                    continue;
                }
                let setup = s.machine_last[m].map_or(0, |prev| inst.setup(prev, job, m));
                let mut crews = Vec::new();
                crew_counts(&available, r as usize, 0, &mut vec![0; available.len()], &mut crews);
                for counts in crews {
                    let mut workers: Vec<usize> = counts
                        .iter()
                        .zip(&available)
                        .flat_map(|(&n, pool)| pool[..n].iter().copied())
                        .collect();
                    workers.sort_unstable();
                    self.start(s, job, m, setup, pt, workers);
                }
            }
        }

        let next_event = s
            .machine_free_at
            .iter()
            .copied()
            .filter(|&t| t > s.clock)
            .min();
        let saved = (s.clock, s.min_machine);
        match next_event {
            Some(t) => {
                s.clock = t;
                s.min_machine = 0;
                self.dfs(s);
            }
            // Only zero-length jobs can leave the clock stuck with machines
            // below `min_machine` still idle.
            None if s.min_machine > 0 => {
                s.min_machine = 0;
                self.dfs(s);
            }
            None => {}
        }
        (s.clock, s.min_machine) = saved;
    }

    fn start(&mut self, s: &mut Partial, job: usize, m: usize, setup: Time, pt: Time, workers: Vec<usize>) {
        let end = s.clock + setup + pt;
        let saved_machine = (s.machine_free_at[m], s.machine_last[m]);
        let saved = (s.min_machine, s.max_end, s.sum_end, s.utilization);
        let saved_workers: Vec<Time> = workers.iter().map(|&w| s.worker_free_at[w]).collect();
        for &w in &workers {
            s.worker_free_at[w] = end;
        }
        s.machine_free_at[m] = end;
        s.machine_last[m] = Some(job);
        s.remaining &= !(1 << job);
        s.min_machine = m;
        s.max_end = s.max_end.max(end);
        s.sum_end += end;
        s.utilization += workers.len() as Time * (setup + pt);
        let crew = workers.clone();
        s.schedule.push(Assignment {
            job,
            machine: m,
            start: s.clock,
            setup,
            processing: pt,
            workers,
        });

        self.dfs(s);

        s.schedule.pop();
        for (&w, &t) in crew.iter().zip(&saved_workers) {
            s.worker_free_at[w] = t;
        }
        s.remaining |= 1 << job;
        (s.machine_free_at[m], s.machine_last[m]) = saved_machine;
        (s.min_machine, s.max_end, s.sum_end, s.utilization) = saved;
    }
}

/// All ways of drawing `need` workers from the class pools, as per-class counts.
fn crew_counts(pools: &[Vec<usize>], need: usize, class: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if class == pools.len() {
        if need == 0 {
            out.push(cur.clone());
        }
        return;
    }
    let rest: usize = pools[class + 1..].iter().map(Vec::len).sum();
    let lo = need.saturating_sub(rest);
    let hi = need.min(pools[class].len());
    // Largest count from the earliest class first.
    for n in (lo..=hi).rev() {
        cur[class] = n;
        crew_counts(pools, need - n, class + 1, cur, out);
    }
    cur[class] = 0;
}
