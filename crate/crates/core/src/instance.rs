//! Problem data model: machines, jobs, workers and the tables that relate them.
//!
//! Indices are zero-based everywhere in code; job `j1` of a printed table is
//! job `0` here.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Time;

/// Version tag written into every instance file.
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// Bounded resampling budget used by the generator.
const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("cannot read or write instance file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed instance file at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported instance format_version {0}")]
    Version(u32),
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
    #[error("generator configuration rejected: {0}")]
    Generator(String),
}

/// A UPMS instance with setup times and worker resources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub machines: usize,
    pub jobs: usize,
    pub workers: usize,
    /// `processing_time[job][machine]`; `None` when the job cannot run there.
    pub processing_time: Vec<Vec<Option<Time>>>,
    /// `setup_time[from][to][machine]`.
    pub setup_time: Vec<Vec<Vec<Time>>>,
    /// `compatibility[worker][machine]`.
    pub compatibility: Vec<Vec<bool>>,
    /// `required_workforce[job][machine]`, defined exactly where processing time is.
    pub required_workforce: Vec<Vec<Option<u32>>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format_version: u32,
    #[serde(flatten)]
    instance: ProblemInstance,
}

impl ProblemInstance {
    pub fn processing(&self, job: usize, machine: usize) -> Option<Time> {
        self.processing_time[job][machine]
    }

    pub fn workforce(&self, job: usize, machine: usize) -> Option<u32> {
        self.required_workforce[job][machine]
    }

    pub fn setup(&self, from: usize, to: usize, machine: usize) -> Time {
        self.setup_time[from][to][machine]
    }

    pub fn is_eligible(&self, job: usize, machine: usize) -> bool {
        self.processing_time[job][machine].is_some()
    }

    pub fn compatible(&self, worker: usize, machine: usize) -> bool {
        self.compatibility[worker][machine]
    }

    /// Number of workers able to operate `machine`.
    pub fn compatible_count(&self, machine: usize) -> usize {
        self.compatibility.iter().filter(|row| row[machine]).count()
    }

    /// Number of machines `worker` can operate.
    pub fn flexibility(&self, worker: usize) -> usize {
        self.compatibility[worker].iter().filter(|&&c| c).count()
    }

    pub fn eligible_machines(&self, job: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.machines).filter(move |&m| self.is_eligible(job, m))
    }

    /// Checks every structural invariant and reports all violations found.
    ///
    /// A pair whose workforce exceeds the machine's compatible workers is a
    /// warning: the pair can never run, but the instance is still usable while
    /// each job keeps at least one pair that can be staffed.
    pub fn validate(&self) -> ValidationReport {
        let mut findings = Vec::new();
        let mut warnings = Vec::new();
        let (j, m, w) = (self.jobs, self.machines, self.workers);
        if j == 0 || m == 0 || w == 0 {
            findings.push(Finding::EmptyDimension);
        }
        let shape_ok = self.processing_time.len() == j
            && self.processing_time.iter().all(|r| r.len() == m)
            && self.required_workforce.len() == j
            && self.required_workforce.iter().all(|r| r.len() == m)
            && self.setup_time.len() == j
            && self
                .setup_time
                .iter()
                .all(|r| r.len() == j && r.iter().all(|c| c.len() == m))
            && self.compatibility.len() == w
            && self.compatibility.iter().all(|r| r.len() == m);
        if !shape_ok {
            findings.push(Finding::Shape);
            return ValidationReport { findings, warnings };
        }
        let compatible: Vec<usize> = (0..m).map(|mm| self.compatible_count(mm)).collect();
        for job in 0..j {
            let mut any = false;
            let mut staffable = false;
            for machine in 0..m {
                match (
                    self.processing_time[job][machine],
                    self.required_workforce[job][machine],
                ) {
                    (Some(_), Some(r)) => {
                        any = true;
                        if r == 0 {
                            findings.push(Finding::ZeroWorkforce { job, machine });
                        } else if (r as usize) > compatible[machine] {
                            warnings.push(Finding::InsufficientWorkers {
                                job,
                                machine,
                                required: r,
                                compatible: compatible[machine],
                            });
                        } else {
                            staffable = true;
                        }
                    }
                    (None, None) => {}
                    _ => findings.push(Finding::Pairing { job, machine }),
                }
            }
            if !any {
                findings.push(Finding::NoEligibleMachine { job });
            } else if !staffable {
                findings.push(Finding::Unstaffable { job });
            }
        }
        ValidationReport { findings, warnings }
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            format_version: INSTANCE_FORMAT_VERSION,
            instance: self.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("instance serializes");
        text.push('\n');
        text
    }

    /// Parses and validates an instance document.
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| InstanceError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if file.format_version != INSTANCE_FORMAT_VERSION {
            return Err(InstanceError::Version(file.format_version));
        }
        let report = file.instance.validate();
        if !report.is_empty() {
            return Err(InstanceError::Invalid(report));
        }
        Ok(file.instance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// One violated invariant, with the offending indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    EmptyDimension,
    Shape,
    Pairing { job: usize, machine: usize },
    NoEligibleMachine { job: usize },
    /// Every eligible machine of the job lacks enough compatible workers.
    Unstaffable { job: usize },
    ZeroWorkforce { job: usize, machine: usize },
    InsufficientWorkers {
        job: usize,
        machine: usize,
        required: u32,
        compatible: usize,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::EmptyDimension => write!(f, "machines, jobs and workers must all be positive"),
            Finding::Shape => write!(f, "table dimensions do not match machines/jobs/workers"),
            Finding::Pairing { job, machine } => write!(
                f,
                "pairing: processing_time and required_workforce disagree on eligibility of job {job} on machine {machine}"
            ),
            Finding::NoEligibleMachine { job } => {
                write!(f, "eligibility: job {job} has no eligible machine")
            }
            Finding::Unstaffable { job } => write!(
                f,
                "structural infeasibility: job {job} cannot be staffed on any eligible machine"
            ),
            Finding::ZeroWorkforce { job, machine } => {
                write!(f, "workforce: job {job} on machine {machine} requires zero workers")
            }
            Finding::InsufficientWorkers {
                job,
                machine,
                required,
                compatible,
            } => write!(
                f,
                "structural infeasibility: job {job} on machine {machine} needs {required} workers, only {compatible} compatible"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Errors; the instance is unusable while any remain.
    pub findings: Vec<Finding>,
    /// Pairs that can never be staffed.
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub low: u64,
    pub high: u64,
}

impl Range {
    pub const fn new(low: u64, high: u64) -> Self {
        Range { low, high }
    }

    fn sample(&self, rng: &mut impl Rng) -> u64 {
        rng.gen_range(self.low..=self.high)
    }

    pub fn contains(&self, v: u64) -> bool {
        (self.low..=self.high).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub job_count: usize,
    pub machine_count: usize,
    pub worker_count: usize,
    pub job_slot_size: usize,
    pub processing_time_range: Range,
    pub setup_time_range: Range,
    pub workforce_range: Range,
    pub eligibility_probability: f64,
    pub compatibility_probability: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            job_count: 30,
            machine_count: 12,
            worker_count: 60,
            job_slot_size: 10,
            processing_time_range: Range::new(10, 30),
            setup_time_range: Range::new(10, 20),
            workforce_range: Range::new(1, 5),
            eligibility_probability: 0.8,
            compatibility_probability: 0.5,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// The small scenario used for quick training runs: 10 jobs, 3 machines,
    /// 8 workers, a 5-wide job slot and 1..=3 workers per job.
    pub fn desk_scale(seed: u64) -> Self {
        GeneratorConfig {
            job_count: 10,
            machine_count: 3,
            worker_count: 8,
            job_slot_size: 5,
            workforce_range: Range::new(1, 3),
            seed,
            ..Default::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GeneratorConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn check(&self) -> Result<(), InstanceError> {
        let fail = |m: String| Err(InstanceError::Generator(m));
        if self.job_count == 0 || self.machine_count == 0 || self.worker_count == 0 {
            return fail("job, machine and worker counts must be positive".into());
        }
        if self.job_slot_size == 0 {
            return fail("job slot size must be positive".into());
        }
        for (name, r) in [
            ("processing_time_range", self.processing_time_range),
            ("setup_time_range", self.setup_time_range),
            ("workforce_range", self.workforce_range),
        ] {
            if r.low > r.high {
                return fail(format!("{name}: lower bound {} exceeds upper bound {}", r.low, r.high));
            }
        }
        if self.workforce_range.low == 0 {
            return fail("workforce_range: lower bound must be at least 1".into());
        }
        if self.workforce_range.low > self.worker_count as u64 {
            return fail(format!(
                "workforce_range: lower bound {} exceeds worker_count {}",
                self.workforce_range.low, self.worker_count
            ));
        }
        for (name, p) in [
            ("eligibility_probability", self.eligibility_probability),
            ("compatibility_probability", self.compatibility_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.eligibility_probability == 0.0 {
            return fail("eligibility_probability 0 leaves every job without a machine".into());
        }
        if self.compatibility_probability == 0.0 {
            return fail("compatibility_probability 0 leaves every machine without workers".into());
        }
        Ok(())
    }

    /// Time normalization matching this generator's ranges.
    pub fn time_scale(&self) -> f64 {
        (self.processing_time_range.high + self.setup_time_range.high).max(1) as f64
    }
}

/// Draws a random instance. Entries that would leave a job without a machine
/// or demand more workers than a machine has are resampled in place, so the
/// returned instance always has exactly the configured shape.
pub fn generate(config: &GeneratorConfig) -> Result<ProblemInstance, InstanceError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (j, m, w) = (config.job_count, config.machine_count, config.worker_count);

    // Redraw the whole table until some machine can staff the smallest crew.
    let mut compatibility: Vec<Vec<bool>> = Vec::new();
    let mut compatible: Vec<u64> = Vec::new();
    for attempt in 0..=MAX_RESAMPLES {
        if attempt == MAX_RESAMPLES {
            return Err(InstanceError::Generator(format!(
                "no machine has at least {} compatible workers",
                config.workforce_range.low
            )));
        }
        compatibility = (0..w)
            .map(|_| (0..m).map(|_| rng.gen_bool(config.compatibility_probability)).collect())
            .collect();
        compatible = (0..m)
            .map(|mm| compatibility.iter().filter(|row| row[mm]).count() as u64)
            .collect();
        if compatible.iter().any(|&c| c >= config.workforce_range.low) {
            break;
        }
    }

    let mut processing_time = vec![vec![None; m]; j];
    let mut required_workforce = vec![vec![None; m]; j];
    for job in 0..j {
        let mut attempts = 0;
        loop {
            for machine in 0..m {
                let mut entry = None;
                for _ in 0..MAX_RESAMPLES {
                    if !rng.gen_bool(config.eligibility_probability) {
                        entry = Some(None);
                        break;
                    }
                    let pt = config.processing_time_range.sample(&mut rng);
                    let r = config.workforce_range.sample(&mut rng);
                    if r <= compatible[machine] {
                        entry = Some(Some((pt, r as u32)));
                        break;
                    }
                }
                let entry = entry.ok_or_else(|| {
                    InstanceError::Generator(format!(
                        "could not draw a feasible workforce for job {job} on machine {machine}"
                    ))
                })?;
                processing_time[job][machine] = entry.map(|e| e.0);
                required_workforce[job][machine] = entry.map(|e| e.1);
            }
            if processing_time[job].iter().any(Option::is_some) {
                break;
            }
            attempts += 1;
            if attempts >= MAX_RESAMPLES {
                return Err(InstanceError::Generator(format!(
                    "job {job} never drew an eligible machine"
                )));
            }
        }
    }

    let setup_time = (0..j)
        .map(|_| {
            (0..j)
                .map(|_| (0..m).map(|_| config.setup_time_range.sample(&mut rng)).collect())
                .collect()
        })
        .collect();

    let instance = ProblemInstance {
        machines: m,
        jobs: j,
        workers: w,
        processing_time,
        setup_time,
        compatibility,
        required_workforce,
    };
    debug_assert!(instance.validate().is_empty());
    Ok(instance)
}

/// The five-job, two-machine, two-worker worked example with unit setups.
pub fn illustrative_instance() -> ProblemInstance {
    let pt = [
        [Some(2), None],
        [None, Some(3)],
        [Some(1), Some(2)],
        [Some(3), Some(2)],
        [Some(2), Some(2)],
    ];
    let r = [
        [Some(1), None],
        [None, Some(1)],
        [Some(2), Some(1)],
        [Some(1), Some(2)],
        [Some(2), Some(1)],
    ];
    ProblemInstance {
        machines: 2,
        jobs: 5,
        workers: 2,
        processing_time: pt.iter().map(|row| row.to_vec()).collect(),
        setup_time: vec![vec![vec![1; 2]; 5]; 5],
        compatibility: vec![vec![true, true], vec![true, false]],
        required_workforce: r.iter().map(|row| row.to_vec()).collect(),
    }
}
