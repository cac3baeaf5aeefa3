#![allow(dead_code)]

use fpgs::{PriorityOrder, TaskSet, Time};
use proptest::prelude::*;

/// Random valid tasksets with small periods, so hyperperiods stay short.
pub fn small_taskset(
    n: std::ops::RangeInclusive<usize>,
    m: std::ops::RangeInclusive<usize>,
    t_max: Time,
) -> impl Strategy<Value = TaskSet> {
    let task = (2..=t_max)
        .prop_flat_map(|t| (prop_oneof![1..=t, 1..=t.div_ceil(4)], Just(t)))
        .prop_flat_map(|(c, t)| (Just(c), Just(t), c..=t));
    (m, prop::collection::vec(task, n))
        .prop_map(|(m, params)| TaskSet::from_params(m, &params))
        .prop_filter("over capacity", |ts| ts.is_valid())
}

/// A taskset paired with a uniformly random priority order.
pub fn with_order(
    ts: impl Strategy<Value = TaskSet>,
) -> impl Strategy<Value = (TaskSet, PriorityOrder)> {
    ts.prop_flat_map(|ts| {
        let n = ts.len();
        (Just(ts), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
    .prop_map(|(ts, v)| {
        let n = v.len();
        (ts, PriorityOrder::new(v, n).unwrap())
    })
}

pub fn order(v: &[usize]) -> PriorityOrder {
    PriorityOrder::new(v.to_vec(), v.len()).unwrap()
}
