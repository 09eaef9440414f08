use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::ScheduleRecord;
use crate::Time;

pub const GANTT_HEADER: &str = "kind,resource,job,start,end";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneKind {
    Machine,
    Worker,
}

impl LaneKind {
    fn as_str(self) -> &'static str {
        match self {
            LaneKind::Machine => "machine",
            LaneKind::Worker => "worker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GanttRow {
    pub kind: LaneKind,
    pub resource: usize,
    pub job: usize,
    pub start: Time,
    pub end: Time,
}

/// Renders machine-job lanes first, then worker-machine lanes.
pub fn write_gantt(schedule: &ScheduleRecord) -> String {
    let mut out = String::from(GANTT_HEADER);
    out.push('\n');
    let mut machine_rows: Vec<_> = schedule.assignments.iter().collect();
    machine_rows.sort_by_key(|a| (a.machine, a.start, a.job));
    for a in &machine_rows {
        writeln!(out, "machine,{},{},{},{}", a.machine, a.job, a.start, a.end()).unwrap();
    }
    let mut worker_rows: Vec<(usize, usize, Time, Time)> = schedule
        .assignments
        .iter()
        .flat_map(|a| a.workers.iter().map(move |&w| (w, a.job, a.start, a.end())))
        .collect();
    worker_rows.sort_by_key(|&(w, job, start, _)| (w, start, job));
    for (w, job, start, end) in worker_rows {
        writeln!(out, "worker,{w},{job},{start},{end}").unwrap();
    }
    out
}

pub fn export_gantt(schedule: &ScheduleRecord, path: impl AsRef<Path>) -> io::Result<()> {
    fs::write(path, write_gantt(schedule))
}

pub fn parse_gantt(text: &str) -> Result<Vec<GanttRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(GANTT_HEADER) {
        return Err("missing gantt header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(format!("line {}: expected 5 fields", i + 2));
            }
            let kind = match fields[0] {
                "machine" => LaneKind::Machine,
                "worker" => LaneKind::Worker,
                other => return Err(format!("line {}: unknown lane kind {other}", i + 2)),
            };
            let num = |s: &str| s.parse::<u64>().map_err(|e| format!("line {}: {e}", i + 2));
            Ok(GanttRow {
                kind,
                resource: num(fields[1])? as usize,
                job: num(fields[2])? as usize,
                start: num(fields[3])?,
                end: num(fields[4])?,
            })
        })
        .collect()
}

impl std::fmt::Display for LaneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
