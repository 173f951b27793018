//! The eight task-set experiments and their summary outputs.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::{train, Dataset, ExperimentSpec, Hyperparams, TrainHistory};
use crate::error::{Error, Result};
use crate::metrics::MetricRecord;
use crate::model::{Model, ModelConfig};
use crate::task::{TaskId, TaskSet};

pub const RESULTS_HEADER: &str = "task_set,miou,depth_rmse_r,rmsctd_min,weather_acc";

/// Outcome of one experiment of the matrix.
pub struct MatrixRow {
    pub task_set: TaskSet,
    pub spec: ExperimentSpec,
    pub result: Result<(TrainHistory, Model)>,
}

/// Trains every task set in `sets` with the same hyperparameters, running
/// up to `jobs` experiments at once. Rows come back in the order of `sets`;
/// a failed experiment does not stop the others.
pub fn run_matrix(
    base: &Hyperparams,
    model: &ModelConfig,
    sets: &[TaskSet],
    train_data: &Dataset,
    test_data: &Dataset,
    jobs: usize,
) -> Result<Vec<MatrixRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| {
        sets.par_iter()
            .map(|&task_set| {
                let spec = ExperimentSpec::new(task_set, base.clone(), model.clone());
                let result = train(&spec, train_data, test_data);
                MatrixRow { task_set, spec, result }
            })
            .collect()
    }))
}

/// Results table with one row per task set and one column per task metric.
/// Metrics of tasks outside the set are `-`; a set without a record (failed
/// run) shows `failed` in its cells.
pub fn results_table(rows: &[(TaskSet, Option<&MetricRecord>)]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for (set, rec) in rows {
        out.push_str(&set.label());
        for task in TaskId::ALL {
            let cell = if !set.contains(task) {
                "-".to_string()
            } else {
                match rec.and_then(|r| r.get(task)) {
                    Some(v) => format!("{v}"),
                    None => "failed".to_string(),
                }
            };
            out.push(',');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}

/// Gnuplot data file of a history's snapshot metrics: one `index` block per
/// task metric with `iteration value` rows.
pub fn curve_file(history: &TrainHistory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# task set {}", history.task_set.label());
    for (block, task) in history.task_set.iter().enumerate() {
        if block > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# index {block}: {}", task.metric_name());
        let _ = writeln!(out, "# iteration {}", task.metric_name());
        for (it, v) in history.metric_curve(task) {
            let _ = writeln!(out, "{it} {v}");
        }
    }
    out
}
