//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset by passing part of a criterion name:
//! `cargo test -p fpgs-core --test acceptance -- soundness`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fpgs::analysis::{self, PartialState};
use fpgs::assign;
use fpgs::experiment::{self, binomial_sigma, FractionMode, FractionRow, Table1Config};
use fpgs::gen::{self, DeadlineModel, GenConfig};
use fpgs::seed::{self, Rng};
use fpgs::sim;
use fpgs::{TaskSet, TestKind, Time};
use rand::Rng as _;

const ROOT: u64 = 20_241_018;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    ok: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Verdict {
    Verdict {
        ok: true,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Verdict {
    Verdict {
        ok: false,
        detail: detail.into(),
    }
}

fn within(limit: Duration, started: Instant, v: Verdict) -> Verdict {
    let took = started.elapsed();
    if v.ok && took > limit {
        return fail(format!("{}; took {took:.1?}, limit {limit:?}", v.detail));
    }
    v
}

fn model(rng: &mut Rng) -> DeadlineModel {
    if rng.random_bool(0.5) {
        DeadlineModel::Constrained
    } else {
        DeadlineModel::Implicit
    }
}

/// 200 sets, n <= 8, m in {2, 4}, U in {0.5m, 0.65m}: OPA with DA-LC finds an
/// order exactly when exhaustive search under DA-LC does.
fn opa_optimality() -> Verdict {
    let started = Instant::now();
    let root = seed::derive(ROOT, 1);
    let (mut agree, mut feasible, mut total) = (0, 0, 0);
    let mut mismatches = Vec::new();
    for j in 0..200u64 {
        let mut rng = seed::rng(seed::derive(root, j));
        let m = [2, 4][j as usize % 2];
        let u = [0.5, 0.65][(j as usize / 2) % 2] * m as f64;
        let n = rng.random_range(m + 1..=8);
        let cfg = GenConfig::new(n, m, u)
            .with_deadlines(model(&mut rng))
            .with_seed(rng.random());
        let ts = match gen::gen_taskset(&cfg) {
            Ok(ts) => ts,
            Err(e) => return fail(format!("generation failed for set {j}: {e}")),
        };
        let exhaustive = match assign::exhaustive_search(&ts, TestKind::DaLc, 8) {
            Ok(e) => e,
            Err(e) => return fail(format!("set {j}: {e}")),
        };
        let opa = assign::opa(&ts);
        let opa_ok = opa
            .order
            .as_ref()
            .is_some_and(|o| analysis::da_lc_verdict(&ts, o).schedulable);
        total += 1;
        feasible += exhaustive.found as usize;
        if opa_ok == exhaustive.found && opa.verdict.schedulable == opa_ok {
            agree += 1;
        } else {
            mismatches.push(j);
        }
    }
    let detail = format!(
        "{agree}/{total} agree ({feasible} DA-LC feasible), {:.1?}",
        started.elapsed()
    );
    let v = if agree == total {
        pass(detail)
    } else {
        fail(format!("{detail}; mismatched sets {mismatches:?}"))
    };
    within(Duration::from_secs(300), started, v)
}

/// 500 sets whose DM order passes RTA-LC; the synchronous pattern and 100
/// random sporadic patterns per set must all meet every deadline.
fn soundness_falsification() -> Verdict {
    let started = Instant::now();
    let root = seed::derive(ROOT, 2);
    let mut accepted: Vec<TaskSet> = Vec::with_capacity(500);
    let mut tried = 0u64;
    while accepted.len() < 500 {
        let mut rng = seed::rng(seed::derive(root, tried));
        tried += 1;
        let m = [2, 4][rng.random_range(0..2)];
        let n = rng.random_range(m + 1..=10);
        let u = rng.random_range(0.5..0.9) * m as f64;
        let cfg = GenConfig::new(n, m, u)
            .with_periods(100, 1000)
            .with_deadlines(model(&mut rng))
            .with_seed(rng.random());
        let Ok(ts) = gen::gen_taskset(&cfg) else {
            continue;
        };
        if analysis::rta_lc(&ts, &assign::deadline_monotonic(&ts)).schedulable {
            accepted.push(ts);
        }
    }
    let mut falsified = Vec::new();
    for (j, ts) in accepted.iter().enumerate() {
        let dm = assign::deadline_monotonic(ts);
        if sim::falsify(ts, &dm, 100, seed::derive(root ^ 0xF, j as u64)) {
            falsified.push(ts.content_hash());
        }
    }
    let detail = format!(
        "{} misses over {} sets x 101 patterns ({tried} candidates), {:.1?}",
        falsified.len(),
        accepted.len(),
        started.elapsed()
    );
    let v = if falsified.is_empty() {
        pass(detail)
    } else {
        fail(format!("{detail}; falsified {falsified:?}"))
    };
    within(Duration::from_secs(600), started, v)
}

/// 200 constrained-deadline sets on one processor, n <= 7: whenever some
/// order passes exact uniprocessor RTA, the DM order does.
fn uniprocessor_dm_optimality() -> Verdict {
    let root = seed::derive(ROOT, 3);
    let (mut feasible, mut dm_ok, mut violations) = (0, 0, Vec::new());
    for j in 0..200u64 {
        let mut rng = seed::rng(seed::derive(root, j));
        let n = rng.random_range(2..=7);
        let u = rng.random_range(0.5..0.95);
        let cfg = GenConfig::new(n, 1, u)
            .with_deadlines(DeadlineModel::Constrained)
            .with_seed(rng.random());
        let ts = match gen::gen_taskset(&cfg) {
            Ok(ts) => ts,
            Err(e) => return fail(format!("generation failed for set {j}: {e}")),
        };
        let exhaustive = match assign::exhaustive_search(&ts, TestKind::RtaUni, 8) {
            Ok(e) => e,
            Err(e) => return fail(format!("set {j}: {e}")),
        };
        let dm = analysis::rta_uniprocessor(&ts, &assign::deadline_monotonic(&ts)).schedulable;
        feasible += exhaustive.found as usize;
        dm_ok += dm as usize;
        if exhaustive.found != dm {
            violations.push(j);
        }
    }
    let detail = format!("{feasible}/200 feasible, DM schedules {dm_ok}");
    if violations.is_empty() {
        pass(detail)
    } else {
        fail(format!("{detail}; DM missed sets {violations:?}"))
    }
}

/// 10^3 random (taskset, order) pairs: folding the incremental step gives the
/// same per-task flags and bounds as the batch analysis.
fn incremental_batch_equivalence() -> Verdict {
    let root = seed::derive(ROOT, 4);
    let mut equal = 0;
    let mut steps = 0;
    for j in 0..1000u64 {
        let mut rng = seed::rng(seed::derive(root, j));
        let m = rng.random_range(1..=4);
        let n = rng.random_range(1..=16);
        let u = rng.random_range(0.2..0.95) * m.min(n) as f64;
        let cfg = GenConfig::new(n, m, u)
            .with_deadlines(model(&mut rng))
            .with_seed(rng.random());
        let ts = match gen::gen_taskset(&cfg) {
            Ok(ts) => ts,
            Err(e) => return fail(format!("generation failed for pair {j}: {e}")),
        };
        let order = assign::random_order(n, rng.random());
        let batch = analysis::rta_lc(&ts, &order);
        let mut state = PartialState::new();
        let mut same = true;
        for &k in order.iter() {
            let (next, ok) = match analysis::rta_lc_incremental(&ts, &state, k) {
                Ok(r) => r,
                Err(e) => return fail(format!("pair {j}: {e}")),
            };
            state = next;
            steps += 1;
            same &= ok == batch.per_task_ok[k]
                && *state.bounds().last().unwrap() == batch.response_bound[k];
        }
        equal += same as usize;
    }
    let detail = format!("{equal}/1000 pairs bit-equal ({steps} steps)");
    if equal == 1000 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn fmt_rows(rows: &[FractionRow]) -> String {
    rows.iter()
        .map(|r| format!("n={}: {:.4}/{:.4}", r.n, r.fraction, r.dm_fraction))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Direction of the schedulable-order fractions against taskset size, with
/// the default generator and 500 sets per size. Each row's standard error is
/// bounded by the binomial `sqrt(p(1-p)/500)`, since per-set fractions lie in
/// [0, 1].
fn table1_direction() -> Verdict {
    let started = Instant::now();
    let mut problems = Vec::new();

    let mut exhaustive = Table1Config::new(vec![4, 6, 8], FractionMode::Exhaustive);
    exhaustive.seed = seed::derive(ROOT, 5);
    let mut sampled = Table1Config::new(
        vec![10, 12, 14, 16],
        FractionMode::Sampled { samples: 1000 },
    );
    sampled.seed = seed::derive(ROOT, 6);
    let (ex_rows, sa_rows) = match (
        experiment::replicate_table1(&exhaustive),
        experiment::replicate_table1(&sampled),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return fail(e.to_string()),
    };

    let sigma = |r: &FractionRow| binomial_sigma(r.fraction, r.sets);
    for w in ex_rows.windows(2) {
        if w[1].fraction >= w[0].fraction {
            problems.push(format!(
                "all-perm fraction not decreasing from n={} to n={}",
                w[0].n, w[1].n
            ));
        }
    }
    for w in sa_rows.windows(2) {
        if w[1].fraction > w[0].fraction + 3.0 * (sigma(&w[0]) + sigma(&w[1])) {
            problems.push(format!(
                "sampled fraction rises from n={} to n={}",
                w[0].n, w[1].n
            ));
        }
    }
    for r in ex_rows.iter().chain(&sa_rows) {
        let dm_sigma = binomial_sigma(r.dm_fraction, r.sets);
        if r.dm_fraction <= r.fraction + 3.0 * (dm_sigma + sigma(r)) {
            problems.push(format!("DM fraction does not exceed random at n={}", r.n));
        }
    }
    let detail = format!(
        "all/dm {}; sampled/dm {}; {:.1?}",
        fmt_rows(&ex_rows),
        fmt_rows(&sa_rows),
        started.elapsed()
    );
    if problems.is_empty() {
        pass(detail)
    } else {
        fail(format!("{detail}; {}", problems.join("; ")))
    }
}

/// 10^4 random workload parameterizations swept over L in [0, 3T], and 10^4
/// random (taskset, order) pairs whose response iterations must rise strictly
/// and stop at a fixed point or just past the deadline.
fn monotonicity() -> Verdict {
    let root = seed::derive(ROOT, 7);
    let mut violations = Vec::new();
    let mut rng = seed::rng(root);
    for j in 0..10_000 {
        let t: Time = rng.random_range(1..=1000);
        let c: Time = rng.random_range(1..=t);
        let r: Time = rng.random_range(c..=t);
        let (mut nc_prev, mut ci_prev) = (0, 0);
        for l in 0..=3 * t {
            let nc = analysis::workload_nc(c, t, l);
            let ci = analysis::workload_ci(c, t, r, l);
            if nc < nc_prev || ci < ci_prev {
                violations.push(format!("workload {j}: C={c} T={t} R={r} L={l}"));
                break;
            }
            (nc_prev, ci_prev) = (nc, ci);
        }
    }
    let mut iterations = 0usize;
    for j in 0..10_000u64 {
        let mut rng = seed::rng(seed::derive(root, j));
        let m = rng.random_range(1..=4);
        let n = rng.random_range(1..=12);
        let u = rng.random_range(0.2..0.9) * m.min(n) as f64;
        let cfg = GenConfig::new(n, m, u)
            .with_deadlines(model(&mut rng))
            .with_seed(rng.random());
        let Ok(ts) = gen::gen_taskset(&cfg) else {
            violations.push(format!("generation failed for pair {j}"));
            continue;
        };
        let order = assign::random_order(n, rng.random());
        let kinds: &[TestKind] = if m == 1 {
            &[TestKind::RtaLc, TestKind::RtaUni]
        } else {
            &[TestKind::RtaLc]
        };
        for &kind in kinds {
            let verdict = analysis::evaluate(kind, &ts, &order);
            for (pos, seq) in analysis::response_iterates(kind, &ts, &order)
                .iter()
                .enumerate()
            {
                let task = ts.tasks[order[pos]];
                iterations += seq.len();
                let rising = seq.windows(2).all(|w| w[1] > w[0]);
                let last = *seq.last().unwrap();
                let bounded = seq.len() as Time <= task.deadline - task.wcet + 2;
                let consistent = verdict.response_bound[task.id] == last
                    && verdict.per_task_ok[task.id] == (last <= task.deadline)
                    && seq[..seq.len() - 1].iter().all(|&x| x <= task.deadline);
                if !(seq[0] == task.wcet && rising && bounded && consistent) {
                    violations.push(format!("{kind} pair {j} task {}", task.id));
                }
            }
        }
    }
    let detail = format!(
        "{} violations ({iterations} iterates checked)",
        violations.len()
    );
    if violations.is_empty() {
        pass(detail)
    } else {
        violations.truncate(5);
        fail(format!("{detail}; first {violations:?}"))
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("opa_optimality", opa_optimality),
        ("soundness_falsification", soundness_falsification),
        ("uniprocessor_dm_optimality", uniprocessor_dm_optimality),
        (
            "incremental_batch_equivalence",
            incremental_batch_equivalence,
        ),
        ("table1_direction", table1_direction),
        ("monotonicity", monotonicity),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let v = run();
        println!(
            "{} {name}: {}",
            if v.ok { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += !v.ok as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
