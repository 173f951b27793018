//! Task identifiers and task sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    /// τ1, pixel-wise car/pedestrian/background classification.
    Seg,
    /// τ2, log-scaled depth regression.
    Depth,
    /// τ3, time-of-day regression on the minute circle.
    Time,
    /// τ4, weather classification.
    Weather,
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [TaskId::Seg, TaskId::Depth, TaskId::Time, TaskId::Weather];

    /// 1-based index used on the command line and in labels.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<TaskId> {
        TaskId::ALL.get((n as usize).wrapping_sub(1)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Seg => "seg",
            TaskId::Depth => "depth",
            TaskId::Time => "time",
            TaskId::Weather => "weather",
        }
    }

    pub fn from_name(name: &str) -> Option<TaskId> {
        TaskId::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Evaluation metric reported for this task.
    pub fn metric_name(self) -> &'static str {
        match self {
            TaskId::Seg => "miou",
            TaskId::Depth => "depth_rmse",
            TaskId::Time => "rmsctd",
            TaskId::Weather => "weather_acc",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-empty subset of the four tasks.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct TaskSet(u8);

impl TaskSet {
    /// The eight task sets of the comparison experiment, in table order.
    pub const MATRIX: [TaskSet; 8] = [
        TaskSet(0b0001),
        TaskSet(0b0010),
        TaskSet(0b0100),
        TaskSet(0b1000),
        TaskSet(0b0011),
        TaskSet(0b0111),
        TaskSet(0b1011),
        TaskSet(0b1111),
    ];

    pub fn new(tasks: impl IntoIterator<Item = TaskId>) -> Result<TaskSet, Error> {
        let mask = tasks.into_iter().fold(0u8, |m, t| m | t.bit());
        if mask == 0 {
            return Err(Error::InvalidConfig("task set must not be empty".into()));
        }
        Ok(TaskSet(mask))
    }

    pub fn all() -> TaskSet {
        TaskSet(0b1111)
    }

    pub fn contains(self, task: TaskId) -> bool {
        self.0 & task.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = TaskId> {
        TaskId::ALL.into_iter().filter(move |t| self.contains(*t))
    }

    /// Filesystem-friendly label such as `t1_t2_t4`.
    pub fn label(self) -> String {
        self.iter().map(|t| format!("t{}", t.number())).collect::<Vec<_>>().join("_")
    }

    pub fn from_label(label: &str) -> Option<TaskSet> {
        let tasks: Option<Vec<TaskId>> =
            label.split('_').map(|p| p.strip_prefix('t')?.parse().ok().and_then(TaskId::from_number)).collect();
        TaskSet::new(tasks?).ok()
    }
}

impl fmt::Display for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|t| format!("t{}", t.number())).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl fmt::Debug for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Parses comma-separated task numbers, e.g. `1,2,4`.
impl FromStr for TaskSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tasks = s
            .split(',')
            .map(|p| {
                let p = p.trim();
                p.parse::<u8>()
                    .ok()
                    .and_then(TaskId::from_number)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown task id '{p}' (expected 1-4)")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        TaskSet::new(tasks)
    }
}

impl TryFrom<Vec<u8>> for TaskSet {
    type Error = Error;

    fn try_from(ids: Vec<u8>) -> Result<Self, Self::Error> {
        let tasks = ids
            .into_iter()
            .map(|n| TaskId::from_number(n).ok_or_else(|| Error::InvalidConfig(format!("unknown task id {n}"))))
            .collect::<Result<Vec<_>, _>>()?;
        TaskSet::new(tasks)
    }
}

impl From<TaskSet> for Vec<u8> {
    fn from(set: TaskSet) -> Vec<u8> {
        set.iter().map(TaskId::number).collect()
    }
}
