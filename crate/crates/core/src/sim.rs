//! Event-driven simulation of preemptive global fixed-priority scheduling.
//!
//! At every instant the `m` highest-priority pending jobs run, one processor
//! each; migration is free and a job never runs on two processors at once.
//! Time only advances to the next release, completion or deadline, so the
//! cost is proportional to the number of jobs rather than to the horizon.
//!
//! The simulator can only *refute* a schedulability claim. A run without a
//! deadline miss proves nothing about other arrival patterns.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::{self, Rng};
use crate::task::{PriorityOrder, TaskSet, Time};

/// Upper limit on the default simulation horizon.
pub const MAX_HORIZON: Time = 1_000_000;

/// Success probability of the geometric jitter added to sporadic gaps.
pub const GAP_JITTER_P: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Arrivals {
    /// All tasks release at 0 and then strictly periodically.
    Synchronous,
    /// First release at `min(G, T_i)`, then gaps of `T_i + min(G, T_i)` with
    /// `G ~ Geometric(0.1)` drawn per job.
    RandomSporadic { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalPattern {
    #[serde(flatten)]
    pub arrivals: Arrivals,
    /// No job is released at or after the horizon. Defaults to
    /// `min(lcm(T), MAX_HORIZON)`.
    #[serde(default)]
    pub horizon: Option<Time>,
}

impl ArrivalPattern {
    pub fn synchronous() -> Self {
        Self {
            arrivals: Arrivals::Synchronous,
            horizon: None,
        }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            arrivals: Arrivals::RandomSporadic { seed },
            horizon: None,
        }
    }

    pub fn with_horizon(mut self, horizon: Time) -> Self {
        self.horizon = Some(horizon);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Miss {
    pub task: usize,
    pub time: Time,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub miss: bool,
    pub first_miss: Option<Miss>,
    /// Largest observed response time per task id (0 if no job completed).
    pub worst_response: Vec<Time>,
    pub jobs_completed: u64,
}

/// An interval during which the set of running and waiting jobs is constant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: Time,
    pub end: Time,
    /// Task ids running, highest priority first.
    pub running: Vec<usize>,
    /// Task ids pending but not running, highest priority first.
    pub waiting: Vec<usize>,
}

fn gcd(a: Time, b: Time) -> Time {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `min(lcm of all periods, MAX_HORIZON)`.
pub fn default_horizon(ts: &TaskSet) -> Time {
    let mut l: Time = 1;
    for t in &ts.tasks {
        l = (l / gcd(l, t.period)).saturating_mul(t.period);
        if l >= MAX_HORIZON {
            return MAX_HORIZON;
        }
    }
    l
}

enum Source {
    Periodic,
    Sporadic { rng: Box<Rng>, log_q: f64 },
}

impl Source {
    fn new(arrivals: Arrivals) -> Self {
        match arrivals {
            Arrivals::Synchronous => Source::Periodic,
            Arrivals::RandomSporadic { seed } => Source::Sporadic {
                rng: Box::new(seed::rng(seed)),
                log_q: (1.0 - GAP_JITTER_P).ln(),
            },
        }
    }

    fn jitter(&mut self, period: Time) -> Time {
        match self {
            Source::Periodic => 0,
            Source::Sporadic { rng, log_q } => {
                // inverse CDF of the number of failures before a success
                let u: f64 = 1.0 - rng.random::<f64>();
                ((u.ln() / *log_q).floor() as Time).min(period)
            }
        }
    }
}

const NEVER: Time = Time::MAX;

/// Per-task state, stored in priority order.
#[derive(Clone, Copy)]
struct Slot {
    id: usize,
    wcet: Time,
    period: Time,
    deadline: Time,
    next_release: Time,
    active: bool,
    release: Time,
    remaining: Time,
    abs_deadline: Time,
}

/// Simulates `ts` under `order` until the first deadline miss or until every
/// job released before the horizon has finished.
pub fn simulate(ts: &TaskSet, order: &PriorityOrder, pattern: &ArrivalPattern) -> SimOutcome {
    run(ts, order, pattern, None)
}

/// [`simulate`] that also returns the schedule as constant segments.
pub fn simulate_traced(
    ts: &TaskSet,
    order: &PriorityOrder,
    pattern: &ArrivalPattern,
) -> (SimOutcome, Vec<Segment>) {
    let mut trace = Vec::new();
    let outcome = run(ts, order, pattern, Some(&mut trace));
    (outcome, trace)
}

fn run(
    ts: &TaskSet,
    order: &PriorityOrder,
    pattern: &ArrivalPattern,
    mut trace: Option<&mut Vec<Segment>>,
) -> SimOutcome {
    let n = ts.len();
    let horizon = pattern.horizon.unwrap_or_else(|| default_horizon(ts));
    let mut source = Source::new(pattern.arrivals);

    let mut slots: Vec<Slot> = order
        .iter()
        .map(|&id| {
            let t = &ts.tasks[id];
            let first = source.jitter(t.period);
            Slot {
                id,
                wcet: t.wcet,
                period: t.period,
                deadline: t.deadline,
                next_release: if first < horizon { first } else { NEVER },
                active: false,
                release: 0,
                remaining: 0,
                abs_deadline: NEVER,
            }
        })
        .collect();
    let mut worst = vec![0; n];
    let mut completed = 0u64;
    // ranks of running slots
    let mut running: Vec<usize> = Vec::with_capacity(ts.m);
    let mut now: Time = 0;

    loop {
        running.clear();
        let mut t_next = NEVER;
        for (rank, s) in slots.iter_mut().enumerate() {
            if s.next_release == now {
                // D <= T and gaps >= T: an unfinished predecessor would
                // already have been reported as a miss.
                debug_assert!(!s.active);
                s.active = true;
                s.release = now;
                s.remaining = s.wcet;
                s.abs_deadline = now + s.deadline;
                let next = now + s.period + source.jitter(s.period);
                s.next_release = if next < horizon { next } else { NEVER };
            }
            t_next = t_next.min(s.next_release);
            if s.active {
                t_next = t_next.min(s.abs_deadline);
                if running.len() < ts.m {
                    running.push(rank);
                    t_next = t_next.min(now + s.remaining);
                }
            }
        }
        if t_next == NEVER {
            return SimOutcome {
                miss: false,
                first_miss: None,
                worst_response: worst,
                jobs_completed: completed,
            };
        }

        if let Some(segments) = trace.as_deref_mut() {
            if t_next > now {
                let waiting = (0..n)
                    .filter(|r| slots[*r].active && !running.contains(r))
                    .map(|r| slots[r].id)
                    .collect();
                segments.push(Segment {
                    start: now,
                    end: t_next,
                    running: running.iter().map(|&r| slots[r].id).collect(),
                    waiting,
                });
            }
        }

        let dt = t_next - now;
        now = t_next;
        for &r in &running {
            let s = &mut slots[r];
            s.remaining -= dt;
            if s.remaining == 0 {
                s.active = false;
                worst[s.id] = worst[s.id].max(now - s.release);
                completed += 1;
            }
        }
        let missed = slots
            .iter()
            .filter(|s| s.active && s.abs_deadline <= now)
            .map(|s| s.id)
            .min();
        if let Some(task) = missed {
            return SimOutcome {
                miss: true,
                first_miss: Some(Miss { task, time: now }),
                worst_response: worst,
                jobs_completed: completed,
            };
        }
    }
}

/// Looks for a deadline miss: the synchronous pattern first, then `trials`
/// random sporadic patterns seeded by `derive(seed, trial)`.
pub fn falsify(ts: &TaskSet, order: &PriorityOrder, trials: u64, seed: u64) -> bool {
    falsify_with_horizon(ts, order, trials, seed, None)
}

pub fn falsify_with_horizon(
    ts: &TaskSet,
    order: &PriorityOrder,
    trials: u64,
    seed: u64,
    horizon: Option<Time>,
) -> bool {
    let pattern = |arrivals| ArrivalPattern { arrivals, horizon };
    if simulate(ts, order, &pattern(Arrivals::Synchronous)).miss {
        return true;
    }
    (0..trials).into_par_iter().any(|trial| {
        let arrivals = Arrivals::RandomSporadic {
            seed: seed::derive(seed, trial),
        };
        simulate(ts, order, &pattern(arrivals)).miss
    })
}
