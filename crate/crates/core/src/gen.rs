//! Random taskset generation.
//!
//! Utilizations come from UUniFast-Discard, periods are log-uniform integers,
//! and execution times are `max(1, round(u_i * T_i))`. Rounding can push the
//! total utilization above `m` when `target_u` sits close to it; the most
//! rounded-up tasks are then trimmed by one tick until the set fits.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::{self, Rng};
use crate::task::{Task, TaskSet, Time};
use crate::{Error, Result};

/// Give up on UUniFast-Discard after this many rejected draws.
pub const MAX_DISCARDS: usize = 100_000;

pub const DEFAULT_PERIOD_RANGE: [Time; 2] = [10, 1000];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadlineModel {
    /// `D = T`
    #[default]
    Implicit,
    /// `D` uniform in `[C, T]`
    Constrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    pub target_u: f64,
    #[serde(default = "default_period_range")]
    pub period_range: [Time; 2],
    #[serde(default)]
    pub deadline_model: DeadlineModel,
    #[serde(default)]
    pub seed: u64,
}

fn default_period_range() -> [Time; 2] {
    DEFAULT_PERIOD_RANGE
}

impl GenConfig {
    pub fn new(n: usize, m: usize, target_u: f64) -> Self {
        Self {
            n,
            m,
            target_u,
            period_range: DEFAULT_PERIOD_RANGE,
            deadline_model: DeadlineModel::Implicit,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_periods(mut self, t_min: Time, t_max: Time) -> Self {
        self.period_range = [t_min, t_max];
        self
    }

    pub fn with_deadlines(mut self, model: DeadlineModel) -> Self {
        self.deadline_model = model;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let [t_min, t_max] = self.period_range;
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(self.target_u > 0.0 && self.target_u <= self.m as f64) {
            return Err(Error::Config(format!(
                "target_u {} outside (0, m={}]",
                self.target_u, self.m
            )));
        }
        if t_min < 10 {
            return Err(Error::Config(format!("T_min {t_min} below 10")));
        }
        if t_min > t_max {
            return Err(Error::Config(format!("T_min {t_min} > T_max {t_max}")));
        }
        Ok(())
    }
}

/// UUniFast-Discard: `n` utilizations in `(0, 1]` summing to `target_u`.
pub fn gen_utilizations(n: usize, target_u: f64, seed: u64) -> Result<Vec<f64>> {
    uunifast_discard(n, target_u, &mut seed::rng(seed))
}

pub fn uunifast_discard(n: usize, target_u: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if !target_u.is_finite() || target_u <= 0.0 {
        return Err(Error::Config(format!(
            "target_u {target_u} must be positive"
        )));
    }
    if target_u > n as f64 {
        return Err(Error::Infeasible(format!(
            "target_u {target_u} > n={n} with every u_i <= 1"
        )));
    }
    if target_u == n as f64 {
        return Ok(vec![1.0; n]);
    }
    let mut utils = Vec::with_capacity(n);
    for _ in 0..MAX_DISCARDS {
        utils.clear();
        let mut remaining = target_u;
        for i in 1..n {
            let r: f64 = rng.random();
            let next = remaining * r.powf(1.0 / (n - i) as f64);
            utils.push(remaining - next);
            remaining = next;
        }
        utils.push(remaining);
        if utils.iter().all(|&u| u > 0.0 && u <= 1.0) {
            return Ok(utils);
        }
    }
    Err(Error::Infeasible(format!(
        "no draw with every u_i <= 1 after {MAX_DISCARDS} attempts (n={n}, target_u={target_u})"
    )))
}

/// Integer period, log-uniform over `[t_min, t_max]`.
fn log_uniform_period(t_min: Time, t_max: Time, rng: &mut Rng) -> Time {
    if t_min == t_max {
        return t_min;
    }
    let lo = (t_min as f64).ln();
    let hi = ((t_max + 1) as f64).ln();
    let t = rng.random_range(lo..hi).exp().floor() as Time;
    t.clamp(t_min, t_max)
}

pub fn gen_taskset(cfg: &GenConfig) -> Result<TaskSet> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed);
    let utils = uunifast_discard(cfg.n, cfg.target_u, &mut rng)?;
    let [t_min, t_max] = cfg.period_range;
    let periods: Vec<Time> = (0..cfg.n)
        .map(|_| log_uniform_period(t_min, t_max, &mut rng))
        .collect();
    let mut wcets: Vec<Time> = utils
        .iter()
        .zip(&periods)
        .map(|(&u, &t)| ((u * t as f64).round() as Time).clamp(1, t))
        .collect();

    trim_to_capacity(&utils, &periods, &mut wcets, cfg.m)?;

    let tasks = (0..cfg.n)
        .map(|i| {
            let (c, t) = (wcets[i], periods[i]);
            let d = match cfg.deadline_model {
                DeadlineModel::Implicit => t,
                DeadlineModel::Constrained => rng.random_range(c..=t),
            };
            Task::new(i, c, t, d)
        })
        .collect();
    let ts = TaskSet {
        m: cfg.m,
        seed: Some(cfg.seed),
        target_u: Some(cfg.target_u),
        tasks,
    };
    debug_assert!(ts.is_valid(), "{:?}", ts.validate());
    Ok(ts)
}

/// Generates `count` tasksets; set `k` uses seed `derive(cfg.seed, k)`.
pub fn gen_many(cfg: &GenConfig, count: usize) -> Result<Vec<TaskSet>> {
    (0..count as u64)
        .map(|k| gen_taskset(&cfg.clone().with_seed(seed::derive(cfg.seed, k))))
        .collect()
}

/// Lowers the most rounded-up execution times until `Σ C/T <= m` holds exactly.
fn trim_to_capacity(utils: &[f64], periods: &[Time], wcets: &mut [Time], m: usize) -> Result<()> {
    let fits = |wcets: &[Time]| {
        let probe = TaskSet {
            m,
            seed: None,
            target_u: None,
            tasks: wcets
                .iter()
                .zip(periods)
                .enumerate()
                .map(|(i, (&c, &t))| Task::implicit(i, c, t))
                .collect(),
        };
        probe.is_valid()
    };
    while !fits(wcets) {
        let excess = |i: usize| wcets[i] as f64 / periods[i] as f64 - utils[i];
        let victim = (0..wcets.len())
            .filter(|&i| wcets[i] > 1)
            .max_by(|&a, &b| excess(a).total_cmp(&excess(b)).then(b.cmp(&a)))
            .ok_or_else(|| Error::Infeasible("cannot round utilizations below m".into()))?;
        wcets[victim] -= 1;
    }
    Ok(())
}
