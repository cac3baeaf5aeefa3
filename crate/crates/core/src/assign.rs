//! Priority assignment: sorting heuristics, Audsley's OPA over DA-LC, and the
//! exhaustive and sampled enumeration oracles.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{self, Scratch, TestKind, TestVerdict};
use crate::seed;
use crate::task::{PriorityOrder, Task, TaskSet, Time};
use crate::{Error, Result};

/// Default largest taskset [`exhaustive_search`] accepts.
pub const DEFAULT_ENUMERATION_CAP: usize = 9;

/// Priority-assignment algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Deadline monotonic.
    Dm,
    /// DM with density separation: tasks denser than `m/(3m-2)` first.
    DmDs,
    /// Sort by `D - k*C`.
    DkC,
    /// Shortest job (smallest `C`) first.
    Sjf,
    /// Uniform random permutation.
    Random(u64),
    /// Audsley's algorithm over DA-LC.
    Opa,
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Algorithm::Dm => "DM".into(),
            Algorithm::DmDs => "DM_DS".into(),
            Algorithm::DkC => "DkC".into(),
            Algorithm::Sjf => "SJF".into(),
            Algorithm::Random(seed) => format!("RANDOM({seed})"),
            Algorithm::Opa => "OPA".into(),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    /// Accepts `DM`, `DM_DS` (or `DM-DS`), `DkC`, `SJF`, `OPA`, `RANDOM` and
    /// `RANDOM(<seed>)`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase().replace('-', "_");
        if let Some(rest) = upper.strip_prefix("RANDOM") {
            let seed = match rest {
                "" => 0,
                r => r
                    .strip_prefix('(')
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|r| r.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad random seed in {s:?}")))?,
            };
            return Ok(Algorithm::Random(seed));
        }
        match upper.as_str() {
            "DM" => Ok(Algorithm::Dm),
            "DM_DS" | "DMDS" => Ok(Algorithm::DmDs),
            "DKC" => Ok(Algorithm::DkC),
            "SJF" => Ok(Algorithm::Sjf),
            "OPA" => Ok(Algorithm::Opa),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssignResult {
    pub algorithm: String,
    pub order: Option<PriorityOrder>,
    pub verdict: TestVerdict,
}

/// The DkC weight `k = (m - 1 + sqrt(5m^2 - 6m + 1)) / (2m)`.
pub fn dkc_k(m: usize) -> f64 {
    let m = m as f64;
    (m - 1.0 + (5.0 * m * m - 6.0 * m + 1.0).sqrt()) / (2.0 * m)
}

fn sorted_by(ts: &TaskSet, mut cmp: impl FnMut(&Task, &Task) -> Ordering) -> PriorityOrder {
    let mut idx: Vec<usize> = (0..ts.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ta, tb) = (&ts.tasks[a], &ts.tasks[b]);
        cmp(ta, tb).then(ta.id.cmp(&tb.id)).then(a.cmp(&b))
    });
    PriorityOrder::from_vec_unchecked(idx)
}

pub fn deadline_monotonic(ts: &TaskSet) -> PriorityOrder {
    sorted_by(ts, |a, b| a.deadline.cmp(&b.deadline))
}

pub fn shortest_job_first(ts: &TaskSet) -> PriorityOrder {
    sorted_by(ts, |a, b| a.wcet.cmp(&b.wcet))
}

pub fn dkc(ts: &TaskSet) -> PriorityOrder {
    let k = dkc_k(ts.m);
    let key = |t: &Task| t.deadline as f64 - k * t.wcet as f64;
    sorted_by(ts, |a, b| key(a).total_cmp(&key(b)))
}

/// Heavy tasks (density above `m/(3m-2)`) first, densest first; the rest in
/// deadline-monotonic order. Densities are compared exactly.
pub fn dm_ds(ts: &TaskSet) -> PriorityOrder {
    let m = ts.m as u128;
    let window = |t: &Task| t.deadline.min(t.period) as u128;
    let heavy = |t: &Task| t.wcet as u128 * (3 * m - 2) > m * window(t);
    sorted_by(ts, |a, b| match (heavy(a), heavy(b)) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        // density a > density b  <=>  C_a * w_b > C_b * w_a
        (true, true) => (b.wcet as u128 * window(a)).cmp(&(a.wcet as u128 * window(b))),
        (false, false) => a.deadline.cmp(&b.deadline),
    })
}

pub fn random_order(n: usize, seed: u64) -> PriorityOrder {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    PriorityOrder::from_vec_unchecked(order)
}

/// Order produced by a sorting heuristic. `None` for [`Algorithm::Opa`],
/// which is not a sort.
pub fn heuristic_order(ts: &TaskSet, alg: Algorithm) -> Option<PriorityOrder> {
    Some(match alg {
        Algorithm::Dm => deadline_monotonic(ts),
        Algorithm::DmDs => dm_ds(ts),
        Algorithm::DkC => dkc(ts),
        Algorithm::Sjf => shortest_job_first(ts),
        Algorithm::Random(seed) => random_order(ts.len(), seed),
        Algorithm::Opa => return None,
    })
}

/// Runs `alg`. Heuristic orders are judged by RTA-LC; OPA reports its DA-LC
/// verdict.
pub fn assign(ts: &TaskSet, alg: Algorithm) -> AssignResult {
    match heuristic_order(ts, alg) {
        Some(order) => AssignResult {
            algorithm: alg.name(),
            verdict: analysis::rta_lc(ts, &order),
            order: Some(order),
        },
        None => opa(ts),
    }
}

/// Audsley's optimal priority assignment with DA-LC.
///
/// Levels are filled from the lowest priority up. At each level the
/// candidate is an unassigned task that passes DA-LC with every other
/// unassigned task above it; ties go to the largest deadline, then the lowest
/// id. Fails when some level has no candidate.
pub fn opa(ts: &TaskSet) -> AssignResult {
    let n = ts.len();
    let mut scratch = Scratch::default();
    let mut unassigned: Vec<usize> = (0..n).collect();
    // filled lowest priority first
    let mut reversed = Vec::with_capacity(n);
    let mut bounds = vec![0 as Time; n];
    let mut ok = vec![false; n];
    let mut hp = Vec::with_capacity(n);

    while !unassigned.is_empty() {
        let mut chosen: Option<usize> = None;
        for &k in &unassigned {
            hp.clear();
            hp.extend(unassigned.iter().filter(|&&i| i != k).map(|&i| (i, 0)));
            let resp = analysis::task_response(TestKind::DaLc, ts, &hp, k, &mut scratch, None);
            bounds[k] = resp.bound;
            if !resp.ok {
                continue;
            }
            let better = match chosen {
                None => true,
                Some(c) => {
                    let (tk, tc) = (&ts.tasks[k], &ts.tasks[c]);
                    tk.deadline > tc.deadline || (tk.deadline == tc.deadline && tk.id < tc.id)
                }
            };
            if better {
                chosen = Some(k);
            }
        }
        let Some(k) = chosen else {
            return AssignResult {
                algorithm: Algorithm::Opa.name(),
                order: None,
                verdict: TestVerdict {
                    test: TestKind::DaLc,
                    per_task_ok: ok,
                    response_bound: bounds,
                    schedulable: false,
                },
            };
        };
        ok[k] = true;
        reversed.push(k);
        unassigned.retain(|&i| i != k);
    }

    // Re-evaluate along the final order so bounds reflect the assigned hp sets.
    reversed.reverse();
    let order = PriorityOrder::from_vec_unchecked(reversed);
    let verdict = analysis::da_lc_verdict(ts, &order);
    debug_assert!(verdict.schedulable);
    AssignResult {
        algorithm: Algorithm::Opa.name(),
        order: Some(order),
        verdict,
    }
}

/// Result of enumerating every priority order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Enumeration {
    pub found: bool,
    /// Lexicographically first schedulable order.
    pub order: Option<PriorityOrder>,
    pub schedulable: u64,
    pub total: u64,
    pub fraction: f64,
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

struct Dfs<'a> {
    kind: TestKind,
    ts: &'a TaskSet,
    scratch: Scratch,
    hp: Vec<(usize, Time)>,
    count: u64,
    witness: Option<Vec<usize>>,
}

impl Dfs<'_> {
    fn walk(&mut self, used: u32) {
        let n = self.ts.len();
        let depth = self.hp.len();
        if depth == n {
            self.count += 1;
            if self.witness.is_none() {
                self.witness = Some(self.hp.iter().map(|&(id, _)| id).collect());
            }
            return;
        }
        for id in 0..n {
            if used & (1 << id) != 0 {
                continue;
            }
            let resp =
                analysis::task_response(self.kind, self.ts, &self.hp, id, &mut self.scratch, None);
            // every completion of a failing prefix is unschedulable; only
            // schedulable leaves are counted, so pruning keeps the N! total
            if !resp.ok {
                continue;
            }
            self.hp.push((id, resp.bound));
            self.walk(used | (1 << id));
            self.hp.pop();
        }
    }
}

/// Enumerates all `N!` orders under `kind` and reports the schedulable fraction and the lexicographically first witness.
pub fn exhaustive_search(ts: &TaskSet, kind: TestKind, cap: usize) -> Result<Enumeration> {
    let n = ts.len();
    if n > cap || n > 20 {
        return Err(Error::CapExceeded { n, cap });
    }
    kind.check_applicable(ts)?;
    let total = factorial(n);
    if n == 0 {
        return Ok(Enumeration {
            found: true,
            order: Some(PriorityOrder::identity(0)),
            schedulable: 1,
            total: 1,
            fraction: 1.0,
        });
    }
    let per_root: Vec<(u64, Option<Vec<usize>>)> = (0..n)
        .into_par_iter()
        .map(|root| {
            let mut dfs = Dfs {
                kind,
                ts,
                scratch: Scratch::default(),
                hp: Vec::with_capacity(n),
                count: 0,
                witness: None,
            };
            let resp = analysis::task_response(kind, ts, &[], root, &mut dfs.scratch, None);
            if resp.ok {
                dfs.hp.push((root, resp.bound));
                dfs.walk(1 << root);
            }
            (dfs.count, dfs.witness)
        })
        .collect();
    let schedulable: u64 = per_root.iter().map(|(c, _)| c).sum();
    let witness = per_root.into_iter().find_map(|(_, w)| w);
    Ok(Enumeration {
        found: schedulable > 0,
        order: witness.map(PriorityOrder::from_vec_unchecked),
        schedulable,
        total,
        fraction: schedulable as f64 / total as f64,
    })
}

/// Monte-Carlo estimate of the schedulable fraction from `samples` uniform
/// random orders.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sampled {
    pub schedulable: u64,
    pub samples: u64,
    pub fraction: f64,
}

pub fn sampled_fraction(ts: &TaskSet, kind: TestKind, samples: u64, seed: u64) -> Result<Sampled> {
    if samples == 0 {
        return Err(Error::Config("at least one sample is required".into()));
    }
    kind.check_applicable(ts)?;
    let mut rng = seed::rng(seed);
    let mut scratch = Scratch::default();
    let mut order: Vec<usize> = (0..ts.len()).collect();
    let mut hits = 0;
    for _ in 0..samples {
        order.shuffle(&mut rng);
        if analysis::is_schedulable(kind, ts, &order, &mut scratch) {
            hits += 1;
        }
    }
    Ok(Sampled {
        schedulable: hits,
        samples,
        fraction: hits as f64 / samples as f64,
    })
}
