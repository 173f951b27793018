//! Training history and its long-format CSV.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricRecord;
use crate::task::{TaskId, TaskSet};

pub const HISTORY_HEADER: [&str; 4] = ["iteration", "task", "series", "value"];
/// Task column value for series that belong to the whole task set.
pub const ALL_TASKS: &str = "all";

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub combined: f64,
    pub raw: BTreeMap<TaskId, f64>,
    pub weighted: BTreeMap<TaskId, f64>,
    /// Coefficients after this iteration's update; empty unless they are learned.
    pub c: BTreeMap<TaskId, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub task_set: TaskSet,
    /// Coefficients before the first update (logged at iteration 0).
    pub initial_c: BTreeMap<TaskId, f64>,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<MetricRecord>,
}

impl TrainHistory {
    pub fn new(task_set: TaskSet) -> Self {
        TrainHistory { task_set, initial_c: BTreeMap::new(), steps: Vec::new(), snapshots: Vec::new() }
    }

    pub fn last_snapshot(&self) -> Option<&MetricRecord> {
        self.snapshots.last()
    }

    /// `(iteration, value)` pairs of one task's metric over the snapshots.
    pub fn metric_curve(&self, task: TaskId) -> Vec<(usize, f64)> {
        self.snapshots.iter().filter_map(|s| s.get(task).map(|v| (s.iteration, v))).collect()
    }

    fn rows(&self) -> Vec<[String; 4]> {
        let row =
            |it: usize, task: &str, series: &str, v: f64| [it.to_string(), task.into(), series.into(), format!("{v}")];
        let mut rows = Vec::new();
        for (t, c) in &self.initial_c {
            rows.push(row(0, t.name(), "c", *c));
        }
        let mut snaps = self.snapshots.iter().peekable();
        let mut push_snapshots = |rows: &mut Vec<[String; 4]>, upto: usize| {
            while let Some(s) = snaps.next_if(|s| s.iteration <= upto) {
                for t in self.task_set.iter() {
                    if let Some(v) = s.get(t) {
                        rows.push(row(s.iteration, t.name(), t.metric_name(), v));
                    }
                }
            }
        };
        push_snapshots(&mut rows, 0);
        for step in &self.steps {
            let i = step.iteration;
            rows.push(row(i, ALL_TASKS, "combined_loss", step.combined));
            for t in self.task_set.iter() {
                if let Some(v) = step.raw.get(&t) {
                    rows.push(row(i, t.name(), "raw_loss", *v));
                }
                if let Some(v) = step.weighted.get(&t) {
                    rows.push(row(i, t.name(), "weighted_loss", *v));
                }
                if let Some(v) = step.c.get(&t) {
                    rows.push(row(i, t.name(), "c", *v));
                }
            }
            push_snapshots(&mut rows, i);
        }
        push_snapshots(&mut rows, usize::MAX);
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HISTORY_HEADER).expect("in-memory write");
        for r in self.rows() {
            w.write_record(&r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<TrainHistory> {
        let bad = |line: usize, why: String| Error::format(path, format!("record {line}: {why}"));
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(0, e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != HISTORY_HEADER {
            return Err(Error::format(path, format!("unexpected header {header:?}")));
        }
        let mut tasks = Vec::new();
        let mut initial_c = BTreeMap::new();
        let mut steps: BTreeMap<usize, StepRecord> = BTreeMap::new();
        let mut snaps: BTreeMap<usize, MetricRecord> = BTreeMap::new();
        for (n, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| bad(n + 1, e.to_string()))?;
            if rec.len() != 4 {
                return Err(bad(n + 1, format!("expected 4 fields, got {}", rec.len())));
            }
            let it: usize = rec[0].parse().map_err(|e| bad(n + 1, format!("iteration: {e}")))?;
            let value: f64 = rec[3].parse().map_err(|e| bad(n + 1, format!("value: {e}")))?;
            let series = &rec[2];
            fn step(steps: &mut BTreeMap<usize, StepRecord>, it: usize) -> &mut StepRecord {
                steps.entry(it).or_insert_with(|| StepRecord {
                    iteration: it,
                    combined: f64::NAN,
                    raw: BTreeMap::new(),
                    weighted: BTreeMap::new(),
                    c: BTreeMap::new(),
                })
            }
            if &rec[1] == ALL_TASKS {
                if series != "combined_loss" {
                    return Err(bad(n + 1, format!("unknown series {series}")));
                }
                step(&mut steps, it).combined = value;
                continue;
            }
            let task = TaskId::from_name(&rec[1]).ok_or_else(|| bad(n + 1, format!("unknown task {}", &rec[1])))?;
            tasks.push(task);
            match series {
                "c" if it == 0 => {
                    initial_c.insert(task, value);
                }
                "c" => {
                    step(&mut steps, it).c.insert(task, value);
                }
                "raw_loss" => {
                    step(&mut steps, it).raw.insert(task, value);
                }
                "weighted_loss" => {
                    step(&mut steps, it).weighted.insert(task, value);
                }
                m if m == task.metric_name() => {
                    snaps
                        .entry(it)
                        .or_insert_with(|| MetricRecord { iteration: it, ..MetricRecord::default() })
                        .set(task, value);
                }
                other => return Err(bad(n + 1, format!("unknown series {other} for task {task}"))),
            }
        }
        let task_set = TaskSet::new(tasks).map_err(|_| Error::format(path, "history names no task"))?;
        Ok(TrainHistory {
            task_set,
            initial_c,
            steps: steps.into_values().collect(),
            snapshots: snaps.into_values().collect(),
        })
    }

    pub fn load_csv(path: &Path) -> Result<TrainHistory> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }
}
