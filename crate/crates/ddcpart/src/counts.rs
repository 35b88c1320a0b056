//! Occurrence counts over the discretized state space. These tables are the
//! sole input to the split objective, the validation score, and the
//! nonparametric transition estimator.
//!
//! Counts are stored sparsely; an absent key means zero. Map iteration is in
//! key order, so sums over cells are deterministic.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::tree::Discretization;

/// State key `(x, partition)`.
pub type StateKey = (i64, u32);
/// State-choice key `(x, partition, choice)`.
pub type StateChoiceKey = (i64, u32, u16);

/// Transition cell: origin state, choice made there, destination state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TransitionKey {
    pub dest_x: i64,
    pub dest_partition: u32,
    pub origin_x: i64,
    pub origin_partition: u32,
    pub choice: u16,
}

/// Sparse occurrence counts for a panel under a fixed discretization.
///
/// `state` and `state_choice` count every observation; `origin_choice` counts
/// only observations with a successor period (origins of transitions), so each
/// transition row of `transition` sums to its `origin_choice` entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    pub n_choices: u16,
    /// Declared inclusive X-range of the underlying panel.
    pub x_min: i64,
    pub x_max: i64,
    /// Number of partitions of the discretization the counts were built on.
    pub n_partitions: u32,
    state: BTreeMap<StateKey, u64>,
    state_choice: BTreeMap<StateChoiceKey, u64>,
    transition: BTreeMap<TransitionKey, u64>,
    origin_choice: BTreeMap<StateChoiceKey, u64>,
    pub total_decisions: u64,
    pub total_transitions: u64,
}

impl CountTables {
    /// Size of the declared X-range; outcome-space factor for smoothing.
    pub fn x_span(&self) -> usize {
        (self.x_max - self.x_min + 1) as usize
    }

    pub fn n_state(&self, x: i64, partition: u32) -> u64 {
        *self.state.get(&(x, partition)).unwrap_or(&0)
    }

    pub fn n_state_choice(&self, x: i64, partition: u32, choice: u16) -> u64 {
        *self.state_choice.get(&(x, partition, choice)).unwrap_or(&0)
    }

    pub fn n_transition(&self, key: &TransitionKey) -> u64 {
        *self.transition.get(key).unwrap_or(&0)
    }

    pub fn n_origin_choice(&self, x: i64, partition: u32, choice: u16) -> u64 {
        *self.origin_choice.get(&(x, partition, choice)).unwrap_or(&0)
    }

    pub fn states(&self) -> impl Iterator<Item = (&StateKey, &u64)> {
        self.state.iter()
    }

    pub fn state_choices(&self) -> impl Iterator<Item = (&StateChoiceKey, &u64)> {
        self.state_choice.iter()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (&TransitionKey, &u64)> {
        self.transition.iter()
    }

    pub fn origin_choices(&self) -> impl Iterator<Item = (&StateChoiceKey, &u64)> {
        self.origin_choice.iter()
    }
}

/// Partition assignment of every panel row under `disc`, in row order.
pub fn assignments(panel: &Panel, disc: &Discretization) -> Result<Vec<u32>> {
    if disc.n_dims() != panel.n_dims() {
        return Err(Error::DimensionMismatch {
            expected: disc.n_dims(),
            got: panel.n_dims(),
        });
    }
    Ok((0..panel.n_obs())
        .map(|row| disc.assign_unchecked(panel.q_row(row)))
        .collect())
}

/// Builds all count tables for `panel` under `disc`.
///
/// Transitions pair period `t-1` with `t` within the same agent; the last
/// period of each agent contributes no outgoing transition.
pub fn count_tables(panel: &Panel, disc: &Discretization) -> Result<CountTables> {
    let parts = assignments(panel, disc)?;
    Ok(count_tables_with_assignments(panel, disc.n_partitions(), &parts))
}

/// Same as [`count_tables`] but with precomputed partition assignments.
pub fn count_tables_with_assignments(
    panel: &Panel,
    n_partitions: u32,
    parts: &[u32],
) -> CountTables {
    debug_assert_eq!(parts.len(), panel.n_obs());
    let meta = panel.meta();
    let mut tables = CountTables {
        n_choices: meta.n_choices,
        x_min: meta.x_min,
        x_max: meta.x_max,
        n_partitions,
        state: BTreeMap::new(),
        state_choice: BTreeMap::new(),
        transition: BTreeMap::new(),
        origin_choice: BTreeMap::new(),
        total_decisions: 0,
        total_transitions: 0,
    };
    for row in 0..panel.n_obs() {
        let key = (panel.x(row), parts[row]);
        *tables.state.entry(key).or_insert(0) += 1;
        *tables
            .state_choice
            .entry((key.0, key.1, panel.decision(row)))
            .or_insert(0) += 1;
        tables.total_decisions += 1;
    }
    for (origin, dest) in panel.transitions() {
        let choice = panel.decision(origin);
        let key = TransitionKey {
            dest_x: panel.x(dest),
            dest_partition: parts[dest],
            origin_x: panel.x(origin),
            origin_partition: parts[origin],
            choice,
        };
        *tables.transition.entry(key).or_insert(0) += 1;
        *tables
            .origin_choice
            .entry((panel.x(origin), parts[origin], choice))
            .or_insert(0) += 1;
        tables.total_transitions += 1;
    }
    tables
}
