//! Experiment runners: schedulability ratio against utilization for a set of
//! priority-assignment algorithms, and the fraction of schedulable priority
//! orders as the taskset grows.
//!
//! Both runners generate their tasksets from a single root seed (see
//! [`crate::seed`]), evaluate them in parallel and emit rows in a fixed order,
//! so output is identical for identical configurations.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Scratch, TestKind};
use crate::assign::{self, Algorithm};
use crate::gen::{self, DeadlineModel, GenConfig, DEFAULT_PERIOD_RANGE};
use crate::seed;
use crate::task::{TaskSet, Time};
use crate::{Error, Result};

/// An algorithm column in a schedulability-ratio experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum Contender {
    Assign(Algorithm),
    /// Orders exported by an external policy, one JSON object
    /// `{"hash": ..., "order": [...]}` per line keyed by
    /// [`TaskSet::content_hash`].
    Policy(PathBuf),
}

impl fmt::Display for Contender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Contender::Assign(a) => write!(f, "{a}"),
            Contender::Policy(_) => f.write_str("POLICY"),
        }
    }
}

impl FromStr for Contender {
    type Err = Error;

    /// `POLICY(<path>)` or `POLICY:<path>`, otherwise an [`Algorithm`] name.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let upper = s.to_ascii_uppercase();
        if upper.starts_with("POLICY") {
            let rest = &s["POLICY".len()..];
            let path = rest
                .strip_prefix(':')
                .or_else(|| rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')))
                .filter(|p| !p.is_empty())
                .ok_or_else(|| Error::Config(format!("POLICY needs an order file: {s:?}")))?;
            return Ok(Contender::Policy(PathBuf::from(path)));
        }
        s.parse().map(Contender::Assign)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    /// Total utilizations to sweep.
    pub grid: Vec<f64>,
    pub sets_per_point: usize,
    pub algorithms: Vec<Contender>,
    pub test: TestKind,
    pub period_range: [Time; 2],
    pub deadline_model: DeadlineModel,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults: grid `0.4m, 0.5m, ..., 0.8m`, 500 sets per point, RTA-LC,
    /// periods `[10, 1000]`, implicit deadlines.
    pub fn new(n: usize, m: usize, algorithms: Vec<Contender>) -> Self {
        Self {
            n,
            m,
            grid: [0.4, 0.5, 0.6, 0.7, 0.8]
                .iter()
                .map(|f| f * m as f64)
                .collect(),
            sets_per_point: 500,
            algorithms,
            test: TestKind::RtaLc,
            period_range: DEFAULT_PERIOD_RANGE,
            deadline_model: DeadlineModel::Implicit,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sets_per_point == 0 {
            return Err(Error::Config("sets_per_point must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms given".into()));
        }
        if let Some(u) = self.grid.iter().find(|&&u| u > self.m as f64 || u <= 0.0) {
            return Err(Error::Config(format!(
                "grid value {u} outside (0, m={}]",
                self.m
            )));
        }
        Ok(())
    }

    fn gen_config(&self, target_u: f64) -> GenConfig {
        GenConfig {
            n: self.n,
            m: self.m,
            target_u,
            period_range: self.period_range,
            deadline_model: self.deadline_model,
            seed: 0,
        }
    }
}

/// Seed of taskset `set` at grid point `point`.
pub fn taskset_seed(root: u64, point: usize, set: usize) -> u64 {
    seed::derive(seed::derive(root, point as u64), set as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub utilization: f64,
    pub algorithm: String,
    pub schedulable_count: usize,
    pub total: usize,
    pub ratio: f64,
}

pub const RATIO_HEADER: &str = "utilization,algorithm,schedulable_count,total,ratio";

impl RatioRow {
    pub fn csv(&self) -> String {
        format!(
            "{:.4},{},{},{},{:.4}",
            self.utilization, self.algorithm, self.schedulable_count, self.total, self.ratio
        )
    }
}

/// Reads a policy order file into a map from taskset hash to order.
pub fn load_policy_orders(path: &Path) -> Result<HashMap<String, Vec<usize>>> {
    #[derive(Deserialize)]
    struct Entry {
        hash: String,
        order: Vec<usize>,
    }
    let file = fs::File::open(path).map_err(|e| {
        Error::Io(io::Error::new(
            e.kind(),
            format!("policy order file {}: {e}", path.display()),
        ))
    })?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = serde_json::from_str(&line).map_err(|e| Error::AtLine {
            line: i + 1,
            source: Box::new(e.into()),
        })?;
        map.insert(entry.hash, entry.order);
    }
    Ok(map)
}

enum Column {
    Assign(Algorithm),
    Policy(HashMap<String, Vec<usize>>),
}

impl Column {
    fn schedulable(&self, ts: &TaskSet, test: TestKind, scratch: &mut Scratch) -> Result<bool> {
        let order = match self {
            Column::Assign(Algorithm::Random(s)) => {
                assign::random_order(ts.len(), seed::derive(*s, ts.seed.unwrap_or(0))).into_vec()
            }
            Column::Assign(Algorithm::Opa) => match assign::opa(ts).order {
                Some(o) => o.into_vec(),
                None => return Ok(false),
            },
            Column::Assign(alg) => assign::heuristic_order(ts, *alg)
                .expect("sorting heuristic")
                .into_vec(),
            Column::Policy(orders) => {
                let hash = ts.content_hash();
                let order = orders.get(&hash).ok_or(Error::MissingOrder { hash })?;
                crate::task::PriorityOrder::new(order.clone(), ts.len())?.into_vec()
            }
        };
        Ok(analysis::is_schedulable(test, ts, &order, scratch))
    }
}

/// Schedulability ratio of every algorithm at every grid point, grid-major.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RatioRow>> {
    cfg.validate()?;
    let columns: Vec<Column> = cfg
        .algorithms
        .iter()
        .map(|c| match c {
            Contender::Assign(a) => Ok(Column::Assign(*a)),
            Contender::Policy(p) => load_policy_orders(p).map(Column::Policy),
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.grid.len() * columns.len());
    for (point, &u) in cfg.grid.iter().enumerate() {
        let base = cfg.gen_config(u);
        let per_set: Vec<Vec<bool>> = (0..cfg.sets_per_point)
            .into_par_iter()
            .map_init(Scratch::default, |scratch, set| {
                let mut gc = base.clone();
                gc.seed = taskset_seed(cfg.seed, point, set);
                let ts = gen::gen_taskset(&gc)?;
                columns
                    .iter()
                    .map(|c| c.schedulable(&ts, cfg.test, scratch))
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<_>>()?;
        for (ci, contender) in cfg.algorithms.iter().enumerate() {
            let count = per_set.iter().filter(|r| r[ci]).count();
            rows.push(RatioRow {
                utilization: u,
                algorithm: contender.to_string(),
                schedulable_count: count,
                total: cfg.sets_per_point,
                ratio: count as f64 / cfg.sets_per_point as f64,
            });
        }
    }
    Ok(rows)
}

pub fn write_ratio_csv<W: Write + ?Sized>(rows: &[RatioRow], w: &mut W) -> io::Result<()> {
    writeln!(w, "{RATIO_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv())?;
    }
    Ok(())
}

/// How the fraction of schedulable orders is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FractionMode {
    /// Enumerate all `N!` orders.
    Exhaustive,
    /// `samples` uniform random orders per taskset.
    Sampled { samples: u64 },
}

#[derive(Clone, Debug)]
pub struct Table1Config {
    pub n_values: Vec<usize>,
    pub m: usize,
    /// Total utilization as a fraction of `m`.
    pub load: f64,
    pub sets_per_n: usize,
    pub mode: FractionMode,
    pub test: TestKind,
    pub period_range: [Time; 2],
    pub deadline_model: DeadlineModel,
    pub seed: u64,
    pub enumeration_cap: usize,
}

impl Table1Config {
    /// Defaults: `m = 2`, load `0.6` (target utilization `1.2`), 500 sets
    /// per size, RTA-LC, periods `[10, 1000]`, implicit deadlines, and 1000
    /// samples per taskset in sampled mode.
    pub fn new(n_values: Vec<usize>, mode: FractionMode) -> Self {
        Self {
            n_values,
            m: 2,
            load: 0.6,
            sets_per_n: 500,
            mode,
            test: TestKind::RtaLc,
            period_range: DEFAULT_PERIOD_RANGE,
            deadline_model: DeadlineModel::Implicit,
            seed: 0,
            enumeration_cap: 8,
        }
    }
}

/// One line of the assignment-fraction table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FractionRow {
    pub n: usize,
    /// Mean over tasksets of the schedulable fraction of priority orders.
    pub fraction: f64,
    /// Fraction of tasksets schedulable under deadline-monotonic priorities.
    pub dm_fraction: f64,
    pub sets: usize,
}

impl FractionRow {
    pub fn csv(&self) -> String {
        format!("{},{:.4},{:.4}", self.n, self.fraction, self.dm_fraction)
    }
}

pub fn fraction_header(mode: FractionMode) -> &'static str {
    match mode {
        FractionMode::Exhaustive => "n,all_perm_fraction,dm_fraction",
        FractionMode::Sampled { .. } => "n,sampled_fraction,dm_fraction",
    }
}

/// Average fraction of schedulable priority orders and DM schedulability,
/// per taskset size.
pub fn replicate_table1(cfg: &Table1Config) -> Result<Vec<FractionRow>> {
    if cfg.sets_per_n == 0 {
        return Err(Error::Config("sets_per_n must be at least 1".into()));
    }
    if let FractionMode::Exhaustive = cfg.mode {
        if let Some(&n) = cfg.n_values.iter().find(|&&n| n > cfg.enumeration_cap) {
            return Err(Error::CapExceeded {
                n,
                cap: cfg.enumeration_cap,
            });
        }
    }
    cfg.n_values
        .iter()
        .enumerate()
        .map(|(point, &n)| {
            let base = GenConfig {
                n,
                m: cfg.m,
                target_u: cfg.load * cfg.m as f64,
                period_range: cfg.period_range,
                deadline_model: cfg.deadline_model,
                seed: 0,
            };
            let per_set: Vec<(f64, bool)> = (0..cfg.sets_per_n)
                .into_par_iter()
                .map(|set| {
                    let mut gc = base.clone();
                    gc.seed = taskset_seed(cfg.seed, point, set);
                    let ts = gen::gen_taskset(&gc)?;
                    let fraction = match cfg.mode {
                        FractionMode::Exhaustive => {
                            assign::exhaustive_search(&ts, cfg.test, cfg.enumeration_cap)?.fraction
                        }
                        FractionMode::Sampled { samples } => {
                            assign::sampled_fraction(
                                &ts,
                                cfg.test,
                                samples,
                                seed::derive(gc.seed, 1),
                            )?
                            .fraction
                        }
                    };
                    let dm = assign::deadline_monotonic(&ts);
                    let dm_ok =
                        analysis::is_schedulable(cfg.test, &ts, &dm, &mut Scratch::default());
                    Ok((fraction, dm_ok))
                })
                .collect::<Result<_>>()?;
            let sets = per_set.len();
            Ok(FractionRow {
                n,
                fraction: per_set.iter().map(|p| p.0).sum::<f64>() / sets as f64,
                dm_fraction: per_set.iter().filter(|p| p.1).count() as f64 / sets as f64,
                sets,
            })
        })
        .collect()
}

pub fn write_fraction_csv<W: Write + ?Sized>(
    mode: FractionMode,
    rows: &[FractionRow],
    w: &mut W,
) -> io::Result<()> {
    writeln!(w, "{}", fraction_header(mode))?;
    for r in rows {
        writeln!(w, "{}", r.csv())?;
    }
    Ok(())
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
