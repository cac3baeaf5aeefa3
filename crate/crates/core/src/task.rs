//! The task model: periodic/sporadic tasks with constrained deadlines on an
//! identical multiprocessor platform, plus JSON (de)serialization.
//!
//! A taskset is stored as one JSON object:
//!
//! ```json
//! {"m":2,"seed":7,"target_u":1.3,"tasks":[{"id":0,"C":3,"T":10,"D":10}]}
//! ```
//!
//! Files holding several tasksets use one object per line.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Time instants and durations, in integer ticks.
pub type Time = u64;

/// One periodic (or sporadic) task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    /// Worst-case execution time.
    #[serde(rename = "C")]
    pub wcet: Time,
    /// Minimum inter-arrival time.
    #[serde(rename = "T")]
    pub period: Time,
    /// Relative deadline.
    #[serde(rename = "D")]
    pub deadline: Time,
}

impl Task {
    pub fn new(id: usize, wcet: Time, period: Time, deadline: Time) -> Self {
        Self {
            id,
            wcet,
            period,
            deadline,
        }
    }

    /// An implicit-deadline task (`D = T`).
    pub fn implicit(id: usize, wcet: Time, period: Time) -> Self {
        Self::new(id, wcet, period, period)
    }

    pub fn utilization(&self) -> f64 {
        self.wcet as f64 / self.period as f64
    }

    /// `C / min(D, T)`.
    pub fn density(&self) -> f64 {
        self.wcet as f64 / self.deadline.min(self.period) as f64
    }
}

/// A set of tasks to be scheduled on `m` identical processors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_u: Option<f64>,
    pub tasks: Vec<Task>,
}

impl TaskSet {
    /// Builds a taskset from `(C, T, D)` triples, numbering tasks in order.
    pub fn from_params(m: usize, params: &[(Time, Time, Time)]) -> Self {
        let tasks = params
            .iter()
            .enumerate()
            .map(|(id, &(c, t, d))| Task::new(id, c, t, d))
            .collect();
        Self {
            m,
            seed: None,
            target_u: None,
            tasks,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn utilization(&self) -> f64 {
        self.tasks.iter().map(Task::utilization).sum()
    }

    /// Exact total utilization as a rational number.
    pub fn exact_utilization(&self) -> BigRational {
        self.tasks
            .iter()
            .filter(|t| t.period > 0)
            .fold(BigRational::zero(), |acc, t| {
                acc + BigRational::new(BigInt::from(t.wcet), BigInt::from(t.period))
            })
    }

    /// Every invariant violation, in a stable order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.m == 0 {
            out.push(Violation::NoProcessors);
        }
        for (index, task) in self.tasks.iter().enumerate() {
            if task.id != index {
                out.push(Violation::IdMismatch { index, id: task.id });
            }
            if task.wcet == 0 {
                out.push(Violation::ZeroWcet { id: task.id });
            }
            if task.period == 0 {
                out.push(Violation::ZeroPeriod { id: task.id });
            }
            if task.wcet > task.deadline {
                out.push(Violation::WcetExceedsDeadline { id: task.id });
            }
            if task.deadline > task.period {
                out.push(Violation::DeadlineExceedsPeriod { id: task.id });
            }
        }
        // Utilization is only meaningful once every task is well-formed.
        if out.is_empty()
            && self.exact_utilization() > BigRational::from_integer(BigInt::from(self.m))
        {
            out.push(Violation::Overutilized {
                utilization: self.utilization(),
                m: self.m,
            });
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Fails with [`Error::Invalid`] listing every violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// Content hash of the platform and task parameters, as lowercase hex
    /// SHA-256.
    ///
    /// The hashed text is `m=<m>;` followed by `<C>,<T>,<D>;` for each task in
    /// id order. Seed and target utilization are not part of the key.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("m={};", self.m));
        for t in &self.tasks {
            hasher.update(format!("{},{},{};", t.wcet, t.period, t.deadline));
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("taskset serialization cannot fail")
    }

    /// Parses and validates one taskset.
    pub fn from_json(text: &str) -> Result<Self> {
        let ts: TaskSet = serde_json::from_str(text)?;
        ts.ensure_valid()?;
        Ok(ts)
    }
}

/// A single broken taskset invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoProcessors,
    IdMismatch { index: usize, id: usize },
    ZeroWcet { id: usize },
    ZeroPeriod { id: usize },
    WcetExceedsDeadline { id: usize },
    DeadlineExceedsPeriod { id: usize },
    Overutilized { utilization: f64, m: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoProcessors => write!(f, "m must be at least 1"),
            Violation::IdMismatch { index, id } => {
                write!(f, "task at index {index} has id {id}")
            }
            Violation::ZeroWcet { id } => write!(f, "task {id}: C < 1"),
            Violation::ZeroPeriod { id } => write!(f, "task {id}: T < 1"),
            Violation::WcetExceedsDeadline { id } => write!(f, "task {id}: C > D"),
            Violation::DeadlineExceedsPeriod { id } => write!(f, "task {id}: D > T"),
            Violation::Overutilized { utilization, m } => {
                write!(f, "utilization {utilization} > m={m}")
            }
        }
    }
}

/// A priority order: `order[0]` is the id of the highest-priority task.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorityOrder(Vec<usize>);

impl PriorityOrder {
    /// Checks that `order` is a permutation of `0..n`.
    pub fn new(order: Vec<usize>, n: usize) -> Result<Self> {
        if order.len() != n {
            return Err(Error::InvalidOrder(format!(
                "order has {} entries, taskset has {n} tasks",
                order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &id in &order {
            if id >= n {
                return Err(Error::InvalidOrder(format!("task id {id} out of range")));
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::InvalidOrder(format!("task id {id} appears twice")));
            }
        }
        Ok(Self(order))
    }

    /// `0, 1, …, n-1`.
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Wraps a vector already known to be a permutation.
    pub(crate) fn from_vec_unchecked(order: Vec<usize>) -> Self {
        debug_assert!(Self::new(order.clone(), order.len()).is_ok());
        Self(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `rank[id]` = position of task `id` in the order (0 = highest).
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0; self.0.len()];
        for (pos, &id) in self.0.iter().enumerate() {
            rank[id] = pos;
        }
        rank
    }
}

impl std::ops::Deref for PriorityOrder {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Writes a single taskset as one JSON line.
pub fn save(ts: &TaskSet, path: impl AsRef<Path>) -> Result<()> {
    save_all(std::slice::from_ref(ts), path)
}

/// Reads exactly one taskset. The file may hold it on one or several lines.
pub fn load(path: impl AsRef<Path>) -> Result<TaskSet> {
    let text = fs::read_to_string(path)?;
    TaskSet::from_json(text.trim())
}

/// Writes tasksets as line-delimited JSON.
pub fn save_all(sets: &[TaskSet], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_all(sets, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_all(sets: &[TaskSet], w: &mut impl Write) -> Result<()> {
    for ts in sets {
        writeln!(w, "{}", ts.to_json())?;
    }
    Ok(())
}

/// Reads line-delimited tasksets; blank lines are skipped.
pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<TaskSet>> {
    read_all(BufReader::new(fs::File::open(path)?))
}

pub fn read_all(r: impl BufRead) -> Result<Vec<TaskSet>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ts = TaskSet::from_json(&line).map_err(|e| Error::AtLine {
            line: lineno + 1,
            source: Box::new(e),
        })?;
        out.push(ts);
    }
    Ok(out)
}
