//! Fixed-priority global multiprocessor scheduling toolkit.
//!
//! * [`task`]: task model, validation and JSON files
//! * [`gen`]: seeded random taskset generation (UUniFast-Discard)
//! * [`analysis`]: uniprocessor RTA, global RTA-LC, DA-LC and the
//!   incremental prefix evaluation used for dense rewards
//! * [`assign`]: priority-assignment heuristics, OPA and enumeration oracles
//! * [`sim`]: event-driven global fixed-priority simulator for falsification
//! * [`service`]: line-delimited JSON reward service
//! * [`experiment`]: schedulability-ratio sweeps and assignment-fraction tables

pub mod analysis;
pub mod assign;
pub mod experiment;
pub mod gen;
pub mod seed;
pub mod service;
pub mod sim;
pub mod task;

pub use analysis::{TestKind, TestVerdict};
pub use task::{PriorityOrder, Task, TaskSet, Time};

use task::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid taskset: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid priority order: {0}")]
    InvalidOrder(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad request: {0}")]
    Request(String),
    #[error("infeasible utilization: {0}")]
    Infeasible(String),
    #[error("{n} tasks exceeds the enumeration cap of {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("no policy order for taskset {hash}")]
    MissingOrder { hash: String },
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<Error> },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
