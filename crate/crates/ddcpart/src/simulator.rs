//! Data-generating processes for the Monte Carlo studies: the bus-engine
//! replacement problem extended with a high-dimensional covariate vector
//! whose true discretization drives replacement utilities and mileage
//! increments.
//!
//! Decisions are drawn from the true model's logit choice probabilities,
//! obtained by solving the dynamic program under the true parameters and the
//! true covariate transition law. Buses simulate independently on per-bus
//! RNG streams derived from `(seed, bus)`, so output is identical regardless
//! of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nfxp::{self, StateSpace, TransitionTable};
use crate::panel::{Observation, Panel, PanelMeta};
use crate::tree::Discretization;

/// Sampling domain of every covariate dimension.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum QSupport {
    /// Integers `lo..=hi`, uniform within a partition's box.
    IntegerGrid { lo: i64, hi: i64 },
    /// Reals in `[lo, hi)`.
    Real { lo: f64, hi: f64 },
}

impl QSupport {
    fn root_interval(&self) -> (f64, f64) {
        match self {
            QSupport::IntegerGrid { lo, hi } => (*lo as f64, (*hi + 1) as f64),
            QSupport::Real { lo, hi } => (*lo, *hi),
        }
    }

    /// Uniform draw from the intersection of the support with `[lo, hi)`.
    fn draw(&self, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            QSupport::IntegerGrid { .. } => {
                let first = lo.ceil() as i64;
                let last = hi.ceil() as i64 - 1;
                debug_assert!(last >= first, "integer box [{lo},{hi}) is empty");
                rng.gen_range(first..=last) as f64
            }
            QSupport::Real { .. } => lo + rng.gen::<f64>() * (hi - lo),
        }
    }
}

/// Covariate transition models between partitions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum QTransition {
    /// The partition never changes (the point still resamples within it).
    NoTransition,
    /// The next partition is drawn independently and uniformly.
    RandomTransition,
    /// The partition index advances by offset `o` with probability
    /// `offset_probs[o]`, wrapping around the partition ordering.
    SparseTransition { offset_probs: Vec<f64> },
}

impl QTransition {
    /// Study-1 sparse model: stay or advance one position, half-half.
    pub fn sparse_study1() -> Self {
        QTransition::SparseTransition {
            offset_probs: vec![0.5, 0.5],
        }
    }

    /// Study-2 sparse model: stay or advance one or two positions, each 1/3.
    pub fn sparse_study2() -> Self {
        QTransition::SparseTransition {
            offset_probs: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        }
    }

    fn validate(&self) -> Result<()> {
        if let QTransition::SparseTransition { offset_probs } = self {
            if offset_probs.is_empty()
                || offset_probs.iter().any(|p| *p < 0.0 || !p.is_finite())
                || (offset_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(Error::InvalidArgument(
                    "sparse offset probabilities must be nonnegative and sum to 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// Distribution of the next partition given the current one.
    fn partition_distribution(&self, current: u32, spec: &TruePartitionSpec) -> Vec<(u32, f64)> {
        let k = spec.tree.n_partitions();
        match self {
            QTransition::NoTransition => vec![(current, 1.0)],
            QTransition::RandomTransition => {
                (0..k).map(|p| (p, 1.0 / k as f64)).collect()
            }
            QTransition::SparseTransition { offset_probs } => {
                let position = spec.position_of[current as usize];
                offset_probs
                    .iter()
                    .enumerate()
                    .map(|(offset, prob)| {
                        let next = (position + offset as u32) % k;
                        (spec.leaf_order[next as usize], *prob)
                    })
                    .collect()
            }
        }
    }

    fn draw_partition(&self, current: u32, spec: &TruePartitionSpec, rng: &mut ChaCha8Rng) -> u32 {
        match self {
            QTransition::NoTransition => current,
            QTransition::RandomTransition => rng.gen_range(0..spec.tree.n_partitions()),
            QTransition::SparseTransition { offset_probs } => {
                let u: f64 = rng.gen();
                let mut cumulative = 0.0;
                let mut offset = 0usize;
                for (o, p) in offset_probs.iter().enumerate() {
                    cumulative += p;
                    offset = o;
                    if u < cumulative {
                        break;
                    }
                }
                let k = spec.tree.n_partitions();
                let position = spec.position_of[current as usize];
                spec.leaf_order[((position + offset as u32) % k) as usize]
            }
        }
    }
}

/// A true discretization together with the per-partition structural tables
/// that drive the data-generating process.
#[derive(Debug, Clone)]
pub struct TruePartitionSpec {
    pub tree: Discretization,
    /// Half-open bounding box of each leaf over the full covariate space.
    pub boxes: Vec<Vec<(f64, f64)>>,
    /// Replacement flow utility per partition (negative of a cost).
    pub replacement_utility: Vec<f64>,
    /// Mileage increment per partition, in `{0,1,2,3}`.
    pub mileage_increment: Vec<i64>,
    /// Partition ordering used by sparse transitions: `leaf_order[pos] = id`.
    pub leaf_order: Vec<u32>,
    /// Inverse of `leaf_order`.
    pub position_of: Vec<u32>,
}

impl TruePartitionSpec {
    fn new(
        tree: Discretization,
        support: QSupport,
        replacement_utility: Vec<f64>,
        mileage_increment: Vec<i64>,
    ) -> Result<Self> {
        let k = tree.n_partitions() as usize;
        if replacement_utility.len() != k || mileage_increment.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: replacement_utility.len().min(mileage_increment.len()),
            });
        }
        let root = vec![support.root_interval(); tree.n_dims()];
        let boxes = tree.leaf_boxes(&root)?;
        let leaf_order: Vec<u32> = (0..k as u32).collect();
        let position_of = leaf_order.clone();
        Ok(TruePartitionSpec {
            tree,
            boxes,
            replacement_utility,
            mileage_increment,
            leaf_order,
            position_of,
        })
    }

    fn with_leaf_order(mut self, order: Vec<u32>) -> Self {
        let mut position_of = vec![0u32; order.len()];
        for (pos, &leaf) in order.iter().enumerate() {
            position_of[leaf as usize] = pos as u32;
        }
        self.leaf_order = order;
        self.position_of = position_of;
        self
    }

    /// Writes the tree plus a JSON sidecar with the structural tables.
    pub fn save(&self, tree_path: impl AsRef<std::path::Path>) -> Result<()> {
        let tree_path = tree_path.as_ref();
        self.tree.save(tree_path)?;
        let sidecar = serde_json::json!({
            "replacement_utility": self.replacement_utility,
            "mileage_increment": self.mileage_increment,
            "leaf_order": self.leaf_order,
        });
        let sidecar_path = tree_path.with_extension("tables.json");
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar).unwrap())?;
        Ok(())
    }
}

/// Quadrant truth of the first study: dimensions 0 and 1 split at 5, eight
/// irrelevant integer dimensions appended (D = 10). Partition ids follow the
/// quadrant order (q0<5, q1<5), (q0<5, q1>=5), (q0>=5, q1<5), (q0>=5, q1>=5),
/// which is also the sparse-transition ordering.
pub fn quadrant_truth(dissimilar_costs: bool, dissimilar_increments: bool) -> TruePartitionSpec {
    let mut tree = Discretization::root(10);
    tree.split_leaf(0, 0, 5.0).unwrap(); // leaves: 0 (q0<5), 1 (q0>=5)
    tree.split_leaf(0, 1, 5.0).unwrap(); // 0 -> (0: q1<5, 2: q1>=5)
    tree.split_leaf(1, 1, 5.0).unwrap(); // 1 -> (1: q1<5, 3: q1>=5)

    // Leaf ids by quadrant: (lo,lo)=0, (lo,hi)=2, (hi,lo)=1, (hi,hi)=3.
    let quadrant_leaves = [0u32, 2, 1, 3];
    let costs: [f64; 4] = if dissimilar_costs {
        [-7.0, -6.0, -5.0, -4.0]
    } else {
        [-5.0; 4]
    };
    let increments: [i64; 4] = if dissimilar_increments {
        [0, 1, 2, 3]
    } else {
        [1; 4]
    };
    let k = 4usize;
    let mut replacement_utility = vec![0.0; k];
    let mut mileage_increment = vec![0i64; k];
    for (quadrant, &leaf) in quadrant_leaves.iter().enumerate() {
        replacement_utility[leaf as usize] = costs[quadrant];
        mileage_increment[leaf as usize] = increments[quadrant];
    }
    TruePartitionSpec::new(
        tree,
        QSupport::IntegerGrid { lo: 0, hi: 9 },
        replacement_utility,
        mileage_increment,
    )
    .unwrap()
    .with_leaf_order(quadrant_leaves.to_vec())
}

/// Random truth of the second study, grown by repeatedly picking a leaf with
/// probability proportional to `(1 / splits so far)^2`, a random relevant
/// dimension, and splitting the leaf's box at its midpoint. The replacement
/// utility of a leaf is `5 - sum_i (lo_i + hi_i) / 10` over the relevant
/// dimensions; mileage increments are all 1 or drawn from `{0,1,2,3}`.
pub fn random_discretization(
    seed: u64,
    n_splits: usize,
    relevant_dims: usize,
    total_dims: usize,
    dissimilar_increments: bool,
) -> Result<TruePartitionSpec> {
    if relevant_dims == 0 || relevant_dims > total_dims {
        return Err(Error::InvalidArgument(
            "relevant_dims must lie in 1..=total_dims".into(),
        ));
    }
    let support = QSupport::Real { lo: 0.0, hi: 10.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = Discretization::root(total_dims);
    let root = vec![support.root_interval(); total_dims];
    // Per-leaf state while growing: (box, splits on the path).
    let mut leaf_boxes = vec![root.clone()];
    let mut leaf_splits = vec![0u32];

    let mut failures = 0usize;
    let mut done = 0usize;
    while done < n_splits {
        if failures > 1000 {
            return Err(Error::Validation(
                "random discretization: too many impossible splits".into(),
            ));
        }
        let weights: Vec<f64> = leaf_splits
            .iter()
            .map(|&s| if s == 0 { 1.0 } else { 1.0 / ((s * s) as f64) })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut leaf = leaf_boxes.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                leaf = i;
                break;
            }
            u -= w;
        }
        let dim = rng.gen_range(0..relevant_dims);
        let (lo, hi) = leaf_boxes[leaf][dim];
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            failures += 1;
            continue;
        }
        tree.split_leaf(leaf as u32, dim, mid)?;
        let mut right_box = leaf_boxes[leaf].clone();
        right_box[dim].0 = mid;
        leaf_boxes[leaf][dim].1 = mid;
        let splits = leaf_splits[leaf] + 1;
        leaf_splits[leaf] = splits;
        leaf_boxes.push(right_box);
        leaf_splits.push(splits);
        done += 1;
    }

    let k = tree.n_partitions() as usize;
    let replacement_utility: Vec<f64> = (0..k)
        .map(|leaf| {
            let sum: f64 = leaf_boxes[leaf][..relevant_dims]
                .iter()
                .map(|(lo, hi)| lo + hi)
                .sum();
            5.0 - sum / 10.0
        })
        .collect();
    let mileage_increment: Vec<i64> = if dissimilar_increments {
        (0..k).map(|_| rng.gen_range(0..=3i64)).collect()
    } else {
        vec![1; k]
    };
    TruePartitionSpec::new(tree, support, replacement_utility, mileage_increment)
}

/// Full specification of one simulated data-generating process.
#[derive(Debug, Clone)]
pub struct DgpConfig {
    pub truth: TruePartitionSpec,
    pub q_transition: QTransition,
    pub support: QSupport,
    pub n_buses: usize,
    pub n_periods: usize,
    /// Per-mileage maintenance coefficient in the keep utility (negative).
    pub maintenance_coef: f64,
    pub beta: f64,
    pub seed: u64,
    pub x_min: i64,
    pub x_max: i64,
}

impl DgpConfig {
    /// Study-1 process: quadrant truth over 10 integer dimensions,
    /// `maintenance_coef = -0.2`, mileage capped at 20.
    pub fn study1(
        dissimilar_costs: bool,
        dissimilar_increments: bool,
        q_transition: QTransition,
        n_buses: usize,
        n_periods: usize,
        seed: u64,
    ) -> Self {
        DgpConfig {
            truth: quadrant_truth(dissimilar_costs, dissimilar_increments),
            q_transition,
            support: QSupport::IntegerGrid { lo: 0, hi: 9 },
            n_buses,
            n_periods,
            maintenance_coef: -0.2,
            beta: 0.95,
            seed,
            x_min: 1,
            x_max: 20,
        }
    }

    /// Study-2 process over a random 15-partition truth in 30 real dimensions
    /// (first 10 relevant).
    pub fn study2(
        truth: TruePartitionSpec,
        q_transition: QTransition,
        n_buses: usize,
        n_periods: usize,
        seed: u64,
    ) -> Self {
        DgpConfig {
            truth,
            q_transition,
            support: QSupport::Real { lo: 0.0, hi: 10.0 },
            n_buses,
            n_periods,
            maintenance_coef: -0.2,
            beta: 0.95,
            seed,
            x_min: 1,
            x_max: 20,
        }
    }

    fn validate(&self) -> Result<()> {
        self.q_transition.validate()?;
        if self.n_buses == 0 || self.n_periods == 0 {
            return Err(Error::InvalidArgument(
                "n_buses and n_periods must be positive".into(),
            ));
        }
        if self.x_min < 1 || self.x_max <= self.x_min {
            return Err(Error::InvalidArgument("bad mileage range".into()));
        }
        if self
            .truth
            .mileage_increment
            .iter()
            .any(|&f| !(0..=3).contains(&f))
        {
            return Err(Error::InvalidArgument(
                "mileage increments must lie in 0..=3".into(),
            ));
        }
        Ok(())
    }

    /// Mileage law: keeping advances by the partition's increment capped at
    /// the maximum; replacing restarts at the increment clamped to at least
    /// the minimum mileage.
    pub fn next_mileage(&self, x: i64, decision: u16, partition: u32) -> i64 {
        let increment = self.truth.mileage_increment[partition as usize];
        if decision == 1 {
            increment.clamp(self.x_min, self.x_max)
        } else {
            (x + increment).min(self.x_max)
        }
    }

    /// The true dynamic program on `(mileage, partition)`: transition table,
    /// flow utilities, and the implied logit choice probabilities.
    pub fn true_model(&self) -> Result<TrueModel> {
        self.validate()?;
        let space = StateSpace {
            x_min: self.x_min,
            x_max: self.x_max,
            n_partitions: self.truth.tree.n_partitions(),
        };
        let transitions = TransitionTable::from_rows(space, 2, |s, j| {
            let (x, p) = space.state(s);
            let next_x = self.next_mileage(x, j, p);
            self.q_transition
                .partition_distribution(p, &self.truth)
                .into_iter()
                .filter(|(_, prob)| *prob > 0.0)
                .map(|(next_p, prob)| (space.index(next_x, next_p), prob))
                .collect()
        })?;
        let model = nfxp::UtilityModel::BusLinear {
            maintenance_coef: self.maintenance_coef,
            replacement_utility: self.truth.replacement_utility.clone(),
        };
        let utilities = model.utilities(&space, 2)?;
        let value = nfxp::value_iteration(&utilities, &transitions, self.beta, 1e-12)?;
        let probabilities = nfxp::choice_probabilities(&value, &utilities, &transitions);
        Ok(TrueModel {
            space,
            transitions,
            utilities,
            value,
            probabilities,
        })
    }
}

/// Solved true dynamic program backing a simulation.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub space: StateSpace,
    pub transitions: TransitionTable,
    pub utilities: Vec<f64>,
    pub value: crate::nfxp::ValueFunction,
    pub probabilities: Vec<f64>,
}

impl TrueModel {
    pub fn replace_probability(&self, x: i64, partition: u32) -> f64 {
        self.probabilities[self.space.index(x, partition) * 2 + 1]
    }
}

/// Draws a fresh covariate vector after one period: the next partition comes
/// from the transition model, the location within it is uniform over the
/// partition's box (within-partition location is uninformative).
pub fn transition_q(
    current_partition: u32,
    model: &QTransition,
    spec: &TruePartitionSpec,
    support: QSupport,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let next = model.draw_partition(current_partition, spec, rng);
    draw_within(spec, next, support, rng)
}

fn draw_within(
    spec: &TruePartitionSpec,
    partition: u32,
    support: QSupport,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    spec.boxes[partition as usize]
        .iter()
        .map(|&(lo, hi)| support.draw(lo, hi, rng))
        .collect()
}

/// Simulates a panel by forward simulation from the true dynamic program.
/// Buses run on independent RNG streams keyed by `(seed, bus)`; the per-bus
/// draw order is: initial covariates, then per period one decision draw
/// followed by one covariate redraw.
pub fn simulate(config: &DgpConfig) -> Result<Panel> {
    let model = config.true_model()?;
    let n_dims = config.truth.tree.n_dims();
    let observations: Vec<Vec<Observation>> = (0..config.n_buses)
        .into_par_iter()
        .map(|bus| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(bus as u64 + 1);
            let mut q = {
                let (lo, hi) = config.support.root_interval();
                (0..n_dims)
                    .map(|_| config.support.draw(lo, hi, &mut rng))
                    .collect::<Vec<f64>>()
            };
            let mut x = config.x_min;
            let mut rows = Vec::with_capacity(config.n_periods);
            for period in 1..=config.n_periods {
                let partition = config.truth.tree.assign_unchecked(&q);
                let replace_prob = model.replace_probability(x, partition);
                let decision = u16::from(rng.gen::<f64>() < replace_prob);
                rows.push(Observation {
                    agent_id: bus as u64 + 1,
                    period: period as u32,
                    x,
                    q: q.clone(),
                    decision,
                });
                x = config.next_mileage(x, decision, partition);
                q = transition_q(
                    partition,
                    &config.q_transition,
                    &config.truth,
                    config.support,
                    &mut rng,
                );
            }
            rows
        })
        .collect();

    Panel::from_observations_with_meta(
        observations.into_iter().flatten().collect(),
        PanelMeta {
            n_dims,
            n_choices: 2,
            x_min: config.x_min,
            x_max: config.x_max,
        },
    )
}

/// Number of true partitions recovered exactly: a true partition counts as
/// matched when some estimated leaf contains exactly the same set of panel
/// observations.
pub fn match_partitions(
    truth: &TruePartitionSpec,
    estimated: &Discretization,
    panel: &Panel,
) -> Result<u32> {
    let true_parts = crate::counts::assignments(panel, &truth.tree)?;
    let est_parts = crate::counts::assignments(panel, estimated)?;
    let k_true = truth.tree.n_partitions() as usize;
    let k_est = estimated.n_partitions() as usize;
    let mut true_counts = vec![0u64; k_true];
    let mut est_counts = vec![0u64; k_est];
    // For each true partition: the unique estimated leaf seen, or u32::MAX on
    // a clash.
    let mut unique_est = vec![None::<u32>; k_true];
    for (tp, ep) in true_parts.iter().zip(&est_parts) {
        true_counts[*tp as usize] += 1;
        est_counts[*ep as usize] += 1;
        unique_est[*tp as usize] = match unique_est[*tp as usize] {
            None => Some(*ep),
            Some(prev) if prev == *ep => Some(prev),
            _ => Some(u32::MAX),
        };
    }
    let mut matched = 0u32;
    for t in 0..k_true {
        if let Some(e) = unique_est[t] {
            if e != u32::MAX && est_counts[e as usize] == true_counts[t] && true_counts[t] > 0 {
                matched += 1;
            }
        }
    }
    Ok(matched)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrant_truth_tables() {
        let spec = quadrant_truth(true, true);
        assert_eq!(spec.tree.n_partitions(), 4);
        // Quadrant membership mirrors the paper's layout (ids in leaf order).
        let q = |a: f64, b: f64| {
            let mut v = vec![0.0; 10];
            v[0] = a;
            v[1] = b;
            v
        };
        let low_low = spec.tree.assign(&q(2.0, 2.0)).unwrap();
        let low_high = spec.tree.assign(&q(2.0, 7.0)).unwrap();
        let high_low = spec.tree.assign(&q(7.0, 2.0)).unwrap();
        let high_high = spec.tree.assign(&q(7.0, 7.0)).unwrap();
        assert_eq!(spec.replacement_utility[low_low as usize], -7.0);
        assert_eq!(spec.replacement_utility[low_high as usize], -6.0);
        assert_eq!(spec.replacement_utility[high_low as usize], -5.0);
        assert_eq!(spec.replacement_utility[high_high as usize], -4.0);
        assert_eq!(spec.mileage_increment[low_low as usize], 0);
        assert_eq!(spec.mileage_increment[high_high as usize], 3);
        // Sparse ordering follows the quadrant sequence with wraparound.
        assert_eq!(spec.leaf_order.len(), 4);
        assert_eq!(spec.leaf_order[0], low_low);
        assert_eq!(spec.leaf_order[1], low_high);
        assert_eq!(spec.leaf_order[2], high_low);
        assert_eq!(spec.leaf_order[3], high_high);

        let similar = quadrant_truth(false, false);
        assert!(similar.replacement_utility.iter().all(|&c| c == -5.0));
        assert!(similar.mileage_increment.iter().all(|&f| f == 1));
    }

    #[test]
    fn random_truth_root_cost_and_midpoint() {
        // No splits: cost of the full cube is 5 - 10*(0+10)/10 = -5.
        let spec = random_discretization(3, 0, 10, 30, false).unwrap();
        assert_eq!(spec.replacement_utility, vec![-5.0]);

        // One split halves one relevant dimension at 5.
        let spec = random_discretization(3, 1, 10, 30, false).unwrap();
        let rules = spec.tree.split_rules();
        assert_eq!(rules.len(), 1);
        assert!(rules[0].0 < 10);
        assert_eq!(rules[0].1, 5.0);
    }

    #[test]
    fn simulation_is_deterministic() {
        let config = DgpConfig::study1(true, true, QTransition::RandomTransition, 5, 6, 42);
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a.n_obs(), 30);
        for row in 0..a.n_obs() {
            assert_eq!(a.observation(row), b.observation(row));
        }
    }

    #[test]
    fn no_transition_keeps_partition_fixed() {
        let config = DgpConfig::study1(true, true, QTransition::NoTransition, 8, 10, 7);
        let panel = simulate(&config).unwrap();
        let parts = crate::counts::assignments(&panel, &config.truth.tree).unwrap();
        for (_, range) in panel.agent_ranges() {
            let first = parts[range.start];
            assert!(range.clone().all(|r| parts[r] == first));
        }
    }

    #[test]
    fn mileage_stays_in_bounds() {
        let config = DgpConfig::study1(true, true, QTransition::sparse_study1(), 20, 50, 11);
        let panel = simulate(&config).unwrap();
        for row in 0..panel.n_obs() {
            assert!((1..=20).contains(&panel.x(row)));
        }
    }

    #[test]
    fn match_partitions_identity_and_root() {
        let config = DgpConfig::study1(true, true, QTransition::RandomTransition, 30, 10, 3);
        let panel = simulate(&config).unwrap();
        let full = match_partitions(&config.truth, &config.truth.tree, &panel).unwrap();
        assert_eq!(full, 4);
        let none = match_partitions(
            &config.truth,
            &Discretization::root(panel.n_dims()),
            &panel,
        )
        .unwrap();
        assert_eq!(none, 0);
    }
}
