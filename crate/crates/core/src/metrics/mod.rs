//! Realized schedules and the weighted objective
//! `f(x) = w1·T(x) + w2·U(x) − w3·P(x)`.

mod gantt;
mod oracle;

pub use gantt::{export_gantt, parse_gantt, write_gantt, GanttRow, LaneKind, GANTT_HEADER};
pub use oracle::{brute_force_optimal, OracleError, OracleObjective, OracleSolution, ORACLE_MAX_JOBS, ORACLE_MAX_MACHINES};

use serde::{Deserialize, Serialize};

use crate::Time;

/// One job placed on one machine with its crew.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub job: usize,
    pub machine: usize,
    pub start: Time,
    pub setup: Time,
    pub processing: Time,
    /// Ascending worker ids.
    pub workers: Vec<usize>,
}

impl Assignment {
    pub fn duration(&self) -> Time {
        self.setup + self.processing
    }

    pub fn end(&self) -> Time {
        self.start + self.duration()
    }
}

/// Assignments in the order they were made.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleRecord {
    pub assignments: Vec<Assignment>,
}

/// How the time term `T(x)` is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMeasure {
    /// Completion time of the last job.
    #[default]
    Makespan,
    /// Sum of all job completion times.
    TotalCompletion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Option<Self> {
        (w1 >= 0.0 && w2 >= 0.0 && w3 >= 0.0).then_some(ObjectiveWeights { w1, w2, w3 })
    }
}

impl ScheduleRecord {
    pub fn push(&mut self, assignment: Assignment) {
        self.assignments.push(assignment);
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Assignments of one machine in execution order. A zero-length job
    /// sorts before a job starting at the same instant; the sort is stable.
    pub fn machine_sequence(&self, machine: usize) -> Vec<&Assignment> {
        let mut seq: Vec<&Assignment> = self
            .assignments
            .iter()
            .filter(|a| a.machine == machine)
            .collect();
        seq.sort_by_key(|a| (a.start, a.end()));
        seq
    }

    pub fn contains_job(&self, job: usize) -> bool {
        self.assignments.iter().any(|a| a.job == job)
    }

    pub fn makespan(&self) -> Time {
        self.assignments.iter().map(Assignment::end).max().unwrap_or(0)
    }

    pub fn total_completion(&self) -> Time {
        self.assignments.iter().map(Assignment::end).sum()
    }

    /// Worker-time consumed: `Σ r · (setup + processing)`.
    pub fn utilization(&self) -> Time {
        self.assignments
            .iter()
            .map(|a| a.workers.len() as Time * a.duration())
            .sum()
    }

    pub fn performed(&self) -> usize {
        self.assignments.len()
    }

    pub fn time_term(&self, measure: TimeMeasure) -> Time {
        match measure {
            TimeMeasure::Makespan => self.makespan(),
            TimeMeasure::TotalCompletion => self.total_completion(),
        }
    }

    pub fn objective(&self, weights: &ObjectiveWeights) -> f64 {
        self.objective_with(weights, TimeMeasure::Makespan)
    }

    pub fn objective_with(&self, weights: &ObjectiveWeights, measure: TimeMeasure) -> f64 {
        weights.w1 * self.time_term(measure) as f64 + weights.w2 * self.utilization() as f64
            - weights.w3 * self.performed() as f64
    }
}
