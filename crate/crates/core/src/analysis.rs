//! Schedulability analyses for fixed-priority scheduling.
//!
//! * [`rta_uniprocessor`]: exact response-time analysis for `m = 1`.
//! * [`rta_lc`]: global response-time analysis with limited carry-in. At most
//!   `m - 1` higher-priority tasks may contribute carry-in workload, and only
//!   the `m - 1` largest carry-in surpluses are charged.
//! * [`da_lc`]: the deadline-window variant of RTA-LC. It uses `D_i` in place
//!   of the response bound of every interfering task, so its verdict depends
//!   only on the *set* of higher-priority tasks and is OPA-compatible.
//! * [`PartialState`]: prefix-by-prefix RTA-LC, one task per decode step.
//!
//! All analyses are sufficient tests. Every task under analysis iterates
//! `R <- C_k + f(R)` from `R = C_k`; `f` is non-decreasing, so the sequence is
//! non-decreasing and stops either at a fixed point or as soon as `R > D_k`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::task::{PriorityOrder, Task, TaskSet, Time};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "RTA_UNI")]
    RtaUni,
    #[serde(rename = "RTA_LC")]
    RtaLc,
    #[serde(rename = "DA_LC")]
    DaLc,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::RtaUni, TestKind::RtaLc, TestKind::DaLc];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::RtaUni => "RTA_UNI",
            TestKind::RtaLc => "RTA_LC",
            TestKind::DaLc => "DA_LC",
        }
    }

    /// Uniprocessor RTA only applies to `m = 1`.
    pub fn check_applicable(self, ts: &TaskSet) -> Result<()> {
        if self == TestKind::RtaUni && ts.m != 1 {
            return Err(Error::Config(format!(
                "RTA_UNI requires m = 1, taskset has m = {}",
                ts.m
            )));
        }
        Ok(())
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "RTA_UNI" | "RTA" => Ok(TestKind::RtaUni),
            "RTA_LC" => Ok(TestKind::RtaLc),
            "DA_LC" => Ok(TestKind::DaLc),
            _ => Err(Error::Config(format!("unknown test {s:?}"))),
        }
    }
}

/// Outcome of a schedulability test for one priority order. Vectors are
/// indexed by task id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub test: TestKind,
    pub per_task_ok: Vec<bool>,
    /// The fixed point where a task passes, otherwise the first iterate
    /// beyond its deadline.
    pub response_bound: Vec<Time>,
    pub schedulable: bool,
}

/// Workload of a job sequence without carry-in over a window of length `l`.
#[inline]
pub fn workload_nc(wcet: Time, period: Time, l: Time) -> Time {
    let jobs = l / period;
    jobs * wcet + wcet.min(l - jobs * period)
}

/// Workload with one carry-in job whose response time is bounded by
/// `response`, over a window of length `l`. Requires `wcet <= response <= period`.
#[inline]
pub fn workload_ci(wcet: Time, period: Time, response: Time, l: Time) -> Time {
    debug_assert!(wcet <= response && response <= period);
    let body = l.saturating_sub(wcet);
    let tail = (body % period).saturating_sub(period - response);
    (body / period) * wcet + wcet + tail.min(wcet - 1)
}

/// Sum of the `k` largest values; reorders `values`.
fn top_sum(values: &mut [Time], k: usize) -> Time {
    if k == 0 || values.is_empty() {
        return 0;
    }
    if values.len() > k {
        values.select_nth_unstable_by(k - 1, |a, b| b.cmp(a));
        values[..k].iter().sum()
    } else {
        values.iter().sum()
    }
}

/// An interfering task together with the response bound used for its
/// carry-in job.
#[derive(Clone, Copy, Debug)]
pub struct Interferer {
    pub task: Task,
    pub carry_response: Time,
}

impl Interferer {
    /// Clamps `response` into `[C, T]`, the domain of [`workload_ci`]. Bounds
    /// above `T` come from tasks that already failed.
    pub fn new(task: Task, response: Time) -> Self {
        Self {
            task,
            carry_response: response.clamp(task.wcet, task.period),
        }
    }
}

/// Total RTA-LC interference on a task with execution time `wcet` in a window
/// of length `l >= wcet`.
pub fn lc_interference(
    hp: &[Interferer],
    wcet: Time,
    m: usize,
    l: Time,
    scratch: &mut Vec<Time>,
) -> Time {
    let cap = l - wcet + 1;
    scratch.clear();
    let mut total = 0;
    for i in hp {
        let t = &i.task;
        let nc = workload_nc(t.wcet, t.period, l);
        let ci = workload_ci(t.wcet, t.period, i.carry_response, l).max(nc);
        let nc = nc.min(cap);
        total += nc;
        if m > 1 {
            scratch.push(ci.min(cap) - nc);
        }
    }
    total + top_sum(scratch, m.saturating_sub(1))
}

/// Result of one response-time iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Response {
    pub bound: Time,
    pub ok: bool,
}

/// Iterates `R <- rhs(R)` from `start` until a fixed point or `R > deadline`.
/// Every visited iterate is appended to `trace` when one is given.
pub fn fixed_point(
    start: Time,
    deadline: Time,
    mut rhs: impl FnMut(Time) -> Time,
    mut trace: Option<&mut Vec<Time>>,
) -> Response {
    let mut r = start;
    loop {
        if let Some(t) = trace.as_deref_mut() {
            t.push(r);
        }
        if r > deadline {
            return Response {
                bound: r,
                ok: false,
            };
        }
        let next = rhs(r);
        debug_assert!(next >= r, "non-monotone iteration {r} -> {next}");
        if next == r {
            return Response { bound: r, ok: true };
        }
        r = next;
    }
}

/// Reusable per-thread buffers for the analysis kernels.
#[derive(Default, Debug)]
pub struct Scratch {
    hp: Vec<Interferer>,
    diffs: Vec<Time>,
}

/// Response bound of `task` below the higher-priority tasks `hp`, where each
/// entry pairs a task id with its stored response bound (ignored by tests
/// that do not need it).
pub fn task_response(
    kind: TestKind,
    ts: &TaskSet,
    hp: &[(usize, Time)],
    task: usize,
    scratch: &mut Scratch,
    trace: Option<&mut Vec<Time>>,
) -> Response {
    let k = ts.tasks[task];
    match kind {
        TestKind::RtaUni => {
            let tasks = &ts.tasks;
            fixed_point(
                k.wcet,
                k.deadline,
                |r| {
                    k.wcet
                        + hp.iter()
                            .map(|&(i, _)| r.div_ceil(tasks[i].period) * tasks[i].wcet)
                            .sum::<Time>()
                },
                trace,
            )
        }
        TestKind::RtaLc => {
            scratch.hp.clear();
            scratch
                .hp
                .extend(hp.iter().map(|&(i, r)| Interferer::new(ts.tasks[i], r)));
            let Scratch { hp, diffs } = scratch;
            let m = ts.m;
            fixed_point(
                k.wcet,
                k.deadline,
                |l| k.wcet + lc_interference(hp, k.wcet, m, l, diffs) / m as Time,
                trace,
            )
        }
        TestKind::DaLc => {
            let bound = da_lc_bound(ts, hp.iter().map(|&(i, _)| i), task, scratch);
            if let Some(t) = trace {
                t.push(bound);
            }
            Response {
                bound,
                ok: bound <= k.deadline,
            }
        }
    }
}

/// `C_k + ⌊Ω(D_k)/m⌋` with every interferer's carry-in bounded by its deadline.
fn da_lc_bound(
    ts: &TaskSet,
    hp: impl Iterator<Item = usize>,
    task: usize,
    scratch: &mut Scratch,
) -> Time {
    let k = ts.tasks[task];
    scratch.hp.clear();
    scratch.hp.extend(hp.map(|i| {
        let t = ts.tasks[i];
        Interferer::new(t, t.deadline)
    }));
    let omega = lc_interference(&scratch.hp, k.wcet, ts.m, k.deadline, &mut scratch.diffs);
    k.wcet + omega / ts.m as Time
}

/// DA-LC: does `task` meet its deadline below the higher-priority set `hp_set`?
pub fn da_lc(ts: &TaskSet, hp_set: &[usize], task: usize) -> bool {
    debug_assert!(!hp_set.contains(&task));
    let bound = da_lc_bound(ts, hp_set.iter().copied(), task, &mut Scratch::default());
    bound <= ts.tasks[task].deadline
}

/// Runs `kind` over a full priority order.
pub fn evaluate(kind: TestKind, ts: &TaskSet, order: &PriorityOrder) -> TestVerdict {
    let n = ts.len();
    let mut per_task_ok = vec![false; n];
    let mut response_bound = vec![0; n];
    let mut hp = Vec::with_capacity(n);
    let mut scratch = Scratch::default();
    for &id in order.iter() {
        let resp = task_response(kind, ts, &hp, id, &mut scratch, None);
        per_task_ok[id] = resp.ok;
        response_bound[id] = resp.bound;
        hp.push((id, resp.bound));
    }
    TestVerdict {
        test: kind,
        schedulable: per_task_ok.iter().all(|&ok| ok),
        per_task_ok,
        response_bound,
    }
}

/// Like [`evaluate`] but stops at the first failing task.
pub fn is_schedulable(
    kind: TestKind,
    ts: &TaskSet,
    order: &[usize],
    scratch: &mut Scratch,
) -> bool {
    let mut hp = Vec::with_capacity(order.len());
    for &id in order {
        let resp = task_response(kind, ts, &hp, id, scratch, None);
        if !resp.ok {
            return false;
        }
        hp.push((id, resp.bound));
    }
    true
}

/// Exact uniprocessor RTA. Requires `m = 1`.
pub fn rta_uniprocessor(ts: &TaskSet, order: &PriorityOrder) -> TestVerdict {
    debug_assert_eq!(ts.m, 1);
    evaluate(TestKind::RtaUni, ts, order)
}

/// Global RTA with limited carry-in.
pub fn rta_lc(ts: &TaskSet, order: &PriorityOrder) -> TestVerdict {
    evaluate(TestKind::RtaLc, ts, order)
}

/// DA-LC verdict along an order: each task is checked against the set of
/// tasks placed above it. Bounds are the deadline-window bounds.
pub fn da_lc_verdict(ts: &TaskSet, order: &PriorityOrder) -> TestVerdict {
    evaluate(TestKind::DaLc, ts, order)
}

/// The iterates visited by the response-time iteration of every task, in
/// priority order.
pub fn response_iterates(kind: TestKind, ts: &TaskSet, order: &PriorityOrder) -> Vec<Vec<Time>> {
    let mut hp = Vec::with_capacity(ts.len());
    let mut scratch = Scratch::default();
    order
        .iter()
        .map(|&id| {
            let mut trace = Vec::new();
            let resp = task_response(kind, ts, &hp, id, &mut scratch, Some(&mut trace));
            hp.push((id, resp.bound));
            trace
        })
        .collect()
}

/// RTA-LC evaluated one priority level at a time.
///
/// Folding a full order through [`PartialState::push`] reproduces the
/// per-task flags and bounds of [`rta_lc`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialState {
    placed: Vec<usize>,
    bounds: Vec<Time>,
    step_ok: Vec<bool>,
    hp: Vec<(usize, Time)>,
}

impl PartialState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Task ids in decode order.
    pub fn placed(&self) -> &[usize] {
        &self.placed
    }

    /// Response bounds, aligned with [`placed`](Self::placed).
    pub fn bounds(&self) -> &[Time] {
        &self.bounds
    }

    /// Per-step pass flags, aligned with [`placed`](Self::placed).
    pub fn step_ok(&self) -> &[bool] {
        &self.step_ok
    }

    pub fn passed(&self) -> usize {
        self.step_ok.iter().filter(|&&ok| ok).count()
    }

    /// Places `next` at the next lower priority level and reports whether it
    /// meets its deadline below the tasks already placed.
    pub fn push(&mut self, ts: &TaskSet, next: usize, scratch: &mut Scratch) -> Result<bool> {
        if next >= ts.len() {
            return Err(Error::InvalidOrder(format!("task id {next} out of range")));
        }
        if self.placed.contains(&next) {
            return Err(Error::InvalidOrder(format!(
                "task id {next} already placed"
            )));
        }
        let resp = task_response(TestKind::RtaLc, ts, &self.hp, next, scratch, None);
        self.hp.push((next, resp.bound));
        self.placed.push(next);
        self.bounds.push(resp.bound);
        self.step_ok.push(resp.ok);
        Ok(resp.ok)
    }
}

/// Value-style wrapper around [`PartialState::push`].
pub fn rta_lc_incremental(
    ts: &TaskSet,
    state: &PartialState,
    next: usize,
) -> Result<(PartialState, bool)> {
    let mut state = state.clone();
    let ok = state.push(ts, next, &mut Scratch::default())?;
    Ok((state, ok))
}
