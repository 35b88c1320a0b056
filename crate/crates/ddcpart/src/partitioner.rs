//! Greedy recursive partitioning of the covariate space on the combined
//! decision + transition objective.
//!
//! Splits are proposed only on covariate dimensions while all counts condition
//! on the low-dimensional state. Candidate thresholds sit at midpoints between
//! consecutive distinct observed values, so the procedure depends only on the
//! ordering of each dimension, not its scale.
//!
//! Candidate evaluation is incremental: splitting one leaf only changes
//! objective terms whose decision cell, transition endpoint, or denominator
//! touches that leaf. Per (leaf, dimension) pair the engine sweeps
//! observations in value order and maintains the affected sums under
//! single-observation moves, making one round linear in observations per
//! dimension. Sweeps over distinct (leaf, dimension) pairs run in parallel;
//! the reduce uses a total order, so the result is schedule-independent.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use rayon::prelude::*;

use crate::counts::{count_tables, count_tables_with_assignments, CountTables};
use crate::error::{Error, Result};
use crate::objective::{self, ObjectiveValue, SmoothingConfig};
use crate::panel::Panel;
use crate::tree::Discretization;

/// A proposed split of one leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub partition: u32,
    pub dim: usize,
    pub threshold: f64,
}

/// Tuning knobs for the partitioning run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Hyperparameters {
    /// Minimum observations required in each child of a candidate split.
    pub min_observations: u64,
    /// Minimum relative objective gain `delta / |F|` required to keep splitting.
    pub min_lift: f64,
    /// Maximum number of partitions (leaves).
    pub max_partitions: u32,
    /// Relative weight of the transition component.
    pub lambda_rel: f64,
    /// Smoothing used when this configuration is scored out of sample.
    pub smoothing: SmoothingConfig,
}

impl Hyperparameters {
    /// Settings used by the simulation studies, with the given partition budget.
    pub fn with_max_partitions(max_partitions: u32) -> Self {
        Hyperparameters {
            min_observations: 1,
            min_lift: 1e-10,
            max_partitions,
            lambda_rel: 1.0,
            smoothing: SmoothingConfig::default(),
        }
    }

    pub fn with_lambda_rel(mut self, lambda_rel: f64) -> Self {
        self.lambda_rel = lambda_rel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_observations < 1 {
            return Err(Error::InvalidArgument(
                "min_observations must be at least 1".into(),
            ));
        }
        if self.min_lift < 0.0 || !self.min_lift.is_finite() {
            return Err(Error::InvalidArgument(
                "min_lift must be finite and nonnegative".into(),
            ));
        }
        if self.max_partitions < 1 || self.max_partitions > 60_000 {
            return Err(Error::InvalidArgument(
                "max_partitions must lie in 1..=60000".into(),
            ));
        }
        if self.lambda_rel < 0.0 || !self.lambda_rel.is_finite() {
            return Err(Error::InvalidArgument(
                "lambda_rel must be finite and nonnegative".into(),
            ));
        }
        if self.smoothing.delta < 0.0 {
            return Err(Error::InvalidArgument(
                "smoothing delta must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Objective gain of one candidate split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitGain {
    pub delta_decision: f64,
    pub delta_transition: f64,
    pub delta_combined: f64,
}

/// One accepted split in a partitioning run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthStep {
    pub candidate: SplitCandidate,
    pub gain: SplitGain,
    pub lift: f64,
    /// Combined objective after applying this split.
    pub objective_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxPartitions,
    MinLift,
    NoPositiveGain,
    NoCandidates,
}

/// Full record of a partitioning run.
#[derive(Debug, Clone)]
pub struct Growth {
    pub tree: Discretization,
    /// Final partition id of every training row.
    pub assignments: Vec<u32>,
    /// Scale normalizer frozen at the root (0 when the transition part is
    /// degenerate).
    pub lambda_adjust: f64,
    pub root_objective: ObjectiveValue,
    pub steps: Vec<GrowthStep>,
    pub stop: StopReason,
}

/// Grows a discretization on `train` and returns only the tree.
pub fn discretize(train: &Panel, hp: &Hyperparameters) -> Result<Discretization> {
    Ok(grow(train, hp)?.tree)
}

/// Grows a discretization greedily: each round scores every admissible
/// (leaf, dimension, threshold) candidate by its objective gain and applies
/// the best one. Stops at the partition budget, when the best relative lift
/// falls below `min_lift`, or when no candidate gains.
///
/// The transition weight `lambda_adjust * lambda_rel` is frozen at the root
/// for the whole run; a degenerate transition component at the root drops the
/// transition term (weight zero).
pub fn grow(train: &Panel, hp: &Hyperparameters) -> Result<Growth> {
    hp.validate()?;
    let engine = EngineData::new(train)?;
    let mut tree = Discretization::root(train.n_dims());
    let mut parts = vec![0u32; train.n_obs()];

    let root_counts = count_tables_with_assignments(train, 1, &parts);
    let lambda_adjust = objective::lambda_adjust(&root_counts).unwrap_or(0.0);
    let root_objective = objective::objective(&root_counts, hp.lambda_rel, lambda_adjust)?;
    let lambda = lambda_adjust * hp.lambda_rel;

    let mut combined = root_objective.combined;
    let mut steps = Vec::new();
    let stop = loop {
        if tree.n_partitions() >= hp.max_partitions {
            break StopReason::MaxPartitions;
        }
        let ctxs = build_leaf_contexts(&engine, &parts, tree.n_partitions());
        let Some(best) = search_round(&engine, train, &parts, &ctxs, hp, lambda) else {
            break StopReason::NoCandidates;
        };
        if !(best.gain.delta_combined > 0.0) {
            break StopReason::NoPositiveGain;
        }
        let lift = if combined == 0.0 {
            f64::INFINITY
        } else {
            best.gain.delta_combined / combined.abs()
        };
        if lift < hp.min_lift {
            break StopReason::MinLift;
        }

        let (left, right) = tree.split_leaf(
            best.candidate.partition,
            best.candidate.dim,
            best.candidate.threshold,
        )?;
        debug_assert_eq!(left, best.candidate.partition);
        for &o in &ctxs[best.candidate.partition as usize].obs {
            if train.q_value(o as usize, best.candidate.dim) >= best.candidate.threshold {
                parts[o as usize] = right;
            }
        }
        combined += best.gain.delta_combined;
        steps.push(GrowthStep {
            candidate: best.candidate,
            gain: best.gain,
            lift,
            objective_after: combined,
        });
    };

    debug_assert_eq!(tree.n_partitions() as usize, steps.len() + 1);
    Ok(Growth {
        tree,
        assignments: parts,
        lambda_adjust,
        root_objective,
        steps,
        stop,
    })
}

/// All admissible split candidates of the current tree: midpoints between
/// consecutive distinct observed values per (leaf, dimension), excluding
/// candidates that would starve a child below `min_observations`.
pub fn enumerate_candidates(
    disc: &Discretization,
    panel: &Panel,
    hp: &Hyperparameters,
) -> Result<Vec<SplitCandidate>> {
    hp.validate()?;
    let parts = crate::counts::assignments(panel, disc)?;
    let k = disc.n_partitions() as usize;
    let mut leaf_obs: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (row, &p) in parts.iter().enumerate() {
        leaf_obs[p as usize].push(row);
    }
    let mut out = Vec::new();
    for (pid, rows) in leaf_obs.iter().enumerate() {
        for dim in 0..panel.n_dims() {
            let mut values: Vec<f64> = rows.iter().map(|&r| panel.q_value(r, dim)).collect();
            values.sort_unstable_by(f64::total_cmp);
            let total = values.len() as u64;
            let mut below = 0u64;
            let mut i = 0;
            while i < values.len() {
                let v = values[i];
                while i < values.len() && values[i] == v {
                    below += 1;
                    i += 1;
                }
                if i == values.len() {
                    break;
                }
                if below >= hp.min_observations && total - below >= hp.min_observations {
                    out.push(SplitCandidate {
                        partition: pid as u32,
                        dim,
                        threshold: midpoint(v, values[i]),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Objective gain of a single candidate, computed incrementally: only terms
/// touching the split leaf are reevaluated. The transition component is
/// decomposed as
/// `sum_cells n ln n - sum_states n_dest ln n_state - sum_origins n_oc ln n_oc`,
/// of which a split changes only cells with an endpoint in the leaf, the
/// leaf's states, and the leaf's origins.
pub fn evaluate_split(
    panel: &Panel,
    disc: &Discretization,
    counts: &CountTables,
    candidate: &SplitCandidate,
    lambda_rel: f64,
    lambda_adjust: f64,
) -> Result<SplitGain> {
    if lambda_rel < 0.0 || lambda_adjust < 0.0 {
        return Err(Error::InvalidArgument(
            "objective weights must be nonnegative".into(),
        ));
    }
    let parts = crate::counts::assignments(panel, disc)?;
    let leaf = candidate.partition;
    if leaf >= disc.n_partitions() {
        return Err(Error::InvalidArgument(format!(
            "candidate partition {leaf} outside tree with {} leaves",
            disc.n_partitions()
        )));
    }
    let goes_left = |row: usize| panel.q_value(row, candidate.dim) < candidate.threshold;
    let nlnn = |n: u64| n as f64 * (n as f64).ln();

    // Decision part: cells (x, leaf, j) are replaced by child cells.
    let mut old_dc = 0.0;
    for (&(x, p, _), &n) in counts.state_choices() {
        if p == leaf {
            old_dc += n as f64 * ((n as f64).ln() - (counts.n_state(x, p) as f64).ln());
        }
    }
    let mut child_state: HashMap<(i64, bool), u64> = HashMap::new();
    let mut child_sc: HashMap<(i64, bool, u16), u64> = HashMap::new();
    for row in 0..panel.n_obs() {
        if parts[row] == leaf {
            let side = goes_left(row);
            *child_state.entry((panel.x(row), side)).or_insert(0) += 1;
            *child_sc
                .entry((panel.x(row), side, panel.decision(row)))
                .or_insert(0) += 1;
        }
    }
    let mut new_dc = 0.0;
    for (&(x, side, _), &n) in sorted(&child_sc) {
        new_dc += n as f64 * ((n as f64).ln() - (child_state[&(x, side)] as f64).ln());
    }
    let delta_decision = new_dc - old_dc;

    // Transition cells with an endpoint in the leaf, re-keyed by child side.
    #[derive(PartialEq, Eq, PartialOrd, Ord, Hash, Clone, Copy)]
    enum Code {
        Side(bool),
        External(u32),
    }
    let code = |row: usize| {
        if parts[row] == leaf {
            Code::Side(goes_left(row))
        } else {
            Code::External(parts[row])
        }
    };
    let mut old_cells: HashMap<(i64, u32, i64, u32, u16), u64> = HashMap::new();
    let mut new_cells: HashMap<(i64, Code, i64, Code, u16), u64> = HashMap::new();
    let mut old_dest: HashMap<i64, u64> = HashMap::new();
    let mut new_dest: HashMap<(i64, bool), u64> = HashMap::new();
    let mut new_oc: HashMap<(i64, bool, u16), u64> = HashMap::new();
    for (origin, dest) in panel.transitions() {
        if parts[origin] != leaf && parts[dest] != leaf {
            continue;
        }
        let j = panel.decision(origin);
        *old_cells
            .entry((panel.x(dest), parts[dest], panel.x(origin), parts[origin], j))
            .or_insert(0) += 1;
        *new_cells
            .entry((panel.x(dest), code(dest), panel.x(origin), code(origin), j))
            .or_insert(0) += 1;
        if parts[dest] == leaf {
            *old_dest.entry(panel.x(dest)).or_insert(0) += 1;
            *new_dest
                .entry((panel.x(dest), goes_left(dest)))
                .or_insert(0) += 1;
        }
        if parts[origin] == leaf {
            *new_oc
                .entry((panel.x(origin), goes_left(origin), j))
                .or_insert(0) += 1;
        }
    }

    let mut delta_transition = 0.0;
    for (_, &n) in sorted(&new_cells) {
        delta_transition += nlnn(n);
    }
    for (_, &n) in sorted(&old_cells) {
        delta_transition -= nlnn(n);
    }
    for (&(x, side), &n_dest) in sorted(&new_dest) {
        delta_transition -= n_dest as f64 * (child_state[&(x, side)] as f64).ln();
    }
    for (&x, &n_dest) in sorted(&old_dest) {
        delta_transition += n_dest as f64 * (counts.n_state(x, leaf) as f64).ln();
    }
    for (_, &n) in sorted(&new_oc) {
        delta_transition -= nlnn(n);
    }
    for (&(_, p, _), &n) in counts.origin_choices() {
        if p == leaf {
            delta_transition += nlnn(n);
        }
    }

    Ok(SplitGain {
        delta_decision,
        delta_transition,
        delta_combined: delta_decision + lambda_adjust * lambda_rel * delta_transition,
    })
}

fn sorted<K: Ord, V>(map: &HashMap<K, V>) -> impl Iterator<Item = (&K, &V)> {
    let mut entries: Vec<_> = map.iter().collect();
    entries.sort_by(|a, b| a.0.cmp(b.0));
    entries.into_iter()
}

/// Score report line for one tuning-grid entry.
#[derive(Debug, Clone)]
pub struct TuneEntry {
    pub hyperparameters: Hyperparameters,
    pub score: f64,
    pub n_partitions: u32,
}

/// Result of a grid search over hyperparameters.
#[derive(Debug, Clone)]
pub struct TuneOutcome {
    /// Index into the grid (and `report`) of the winning entry.
    pub best_index: usize,
    /// Discretization grown on the training panel with the winning entry.
    pub tree: Discretization,
    pub report: Vec<TuneEntry>,
}

impl TuneOutcome {
    pub fn best(&self) -> &TuneEntry {
        &self.report[self.best_index]
    }
}

/// Grows one discretization per grid entry on `train`, scores each on
/// `validation` with smoothed training probabilities, and returns the
/// highest-scoring entry (first in grid order on ties).
pub fn tune(train: &Panel, validation: &Panel, grid: &[Hyperparameters]) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("tuning grid is empty".into()));
    }
    if train.meta() != validation.meta() {
        return Err(Error::Validation(
            "train and validation panels must share dimensions, choices, and X-range".into(),
        ));
    }
    // The score's scale normalizer is the root objective ratio on the
    // validation data; it does not depend on the grid entry.
    let val_root = count_tables(validation, &Discretization::root(validation.n_dims()))?;
    let lambda_adjust_val = objective::lambda_adjust(&val_root).unwrap_or(0.0);

    let mut report: Vec<TuneEntry> = Vec::with_capacity(grid.len());
    let mut best_index = 0usize;
    let mut best_tree: Option<Discretization> = None;
    for (i, hp) in grid.iter().enumerate() {
        let growth = grow(train, hp)?;
        let train_counts =
            count_tables_with_assignments(train, growth.tree.n_partitions(), &growth.assignments);
        let val_counts = count_tables(validation, &growth.tree)?;
        let score = objective::validation_score(
            &train_counts,
            &val_counts,
            hp.lambda_rel,
            lambda_adjust_val,
            hp.smoothing,
        )?;
        let is_best = best_tree.is_none() || score > report[best_index].score;
        report.push(TuneEntry {
            hyperparameters: *hp,
            score,
            n_partitions: growth.tree.n_partitions(),
        });
        if is_best {
            best_index = i;
            best_tree = Some(growth.tree);
        }
    }
    Ok(TuneOutcome {
        best_index,
        tree: best_tree.unwrap(),
        report,
    })
}

// ---------------------------------------------------------------------------
// Sweep engine
// ---------------------------------------------------------------------------

/// Multiply-rotate hasher for packed u64 cell keys; deterministic across runs,
/// unlike the default random-state hasher.
#[derive(Default)]
struct CellKeyHasher(u64);

impl Hasher for CellKeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, _bytes: &[u8]) {
        unreachable!("cell keys are hashed as u64");
    }
    fn write_u64(&mut self, n: u64) {
        self.0 = n.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(29);
    }
}

type CellMap = HashMap<u64, u32, BuildHasherDefault<CellKeyHasher>>;

const SIDE_LEFT: u32 = 0;
const SIDE_RIGHT: u32 = 1;
const EXTERNAL_BASE: u32 = 2;
const NO_TRANSITION: u32 = u32::MAX;

/// Packs a transition cell `(dest_x, dest_code, origin_x, origin_code, choice)`
/// into a u64 key: 12 + 16 + 12 + 16 + 8 bits. Codes are child sides (0/1) or
/// external partition id + 2, bounded by the `max_partitions` cap.
fn pack(dx: u16, dcode: u32, ox: u16, ocode: u32, j: u16) -> u64 {
    debug_assert!(dx < (1 << 12) && ox < (1 << 12));
    debug_assert!(dcode < (1 << 16) && ocode < (1 << 16) && j < 256);
    ((dx as u64) << 52)
        | ((dcode as u64) << 36)
        | ((ox as u64) << 24)
        | ((ocode as u64) << 8)
        | (j as u64)
}

/// Midpoint between consecutive distinct values; nudged up to the larger value
/// when rounding would collapse onto the smaller one, so that `q < threshold`
/// separates the two groups exactly.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * (lo + hi);
    if m > lo {
        m
    } else {
        hi
    }
}

/// Immutable per-panel data shared by all rounds.
struct EngineData {
    n_x: usize,
    n_choices: usize,
    x_idx: Vec<u16>,
    decision: Vec<u16>,
    trans_origin: Vec<u32>,
    trans_dest: Vec<u32>,
    /// Transition id where an observation is the origin / destination.
    obs_out: Vec<u32>,
    obs_in: Vec<u32>,
    /// `ln_count[i] = ln(i)`; every objective term is built from these.
    ln_count: Vec<f64>,
}

impl EngineData {
    fn new(panel: &Panel) -> Result<Self> {
        let meta = panel.meta();
        let n_x = meta.x_span();
        if n_x > 4096 {
            return Err(Error::Validation(format!(
                "X-range of size {n_x} exceeds the supported 4096 states"
            )));
        }
        if meta.n_choices as usize > 256 {
            return Err(Error::Validation(
                "more than 256 choices are not supported".into(),
            ));
        }
        let n_obs = panel.n_obs();
        if n_obs >= u32::MAX as usize {
            return Err(Error::Validation("panel too large".into()));
        }
        let x_idx = (0..n_obs)
            .map(|r| (panel.x(r) - meta.x_min) as u16)
            .collect();
        let decision = (0..n_obs).map(|r| panel.decision(r)).collect();
        let mut trans_origin = Vec::with_capacity(panel.n_transitions());
        let mut trans_dest = Vec::with_capacity(panel.n_transitions());
        let mut obs_out = vec![NO_TRANSITION; n_obs];
        let mut obs_in = vec![NO_TRANSITION; n_obs];
        for (origin, dest) in panel.transitions() {
            let t = trans_origin.len() as u32;
            trans_origin.push(origin as u32);
            trans_dest.push(dest as u32);
            obs_out[origin] = t;
            obs_in[dest] = t;
        }
        let ln_count = (0..=n_obs)
            .map(|i| if i == 0 { 0.0 } else { (i as f64).ln() })
            .collect();
        Ok(EngineData {
            n_x,
            n_choices: meta.n_choices as usize,
            x_idx,
            decision,
            trans_origin,
            trans_dest,
            obs_out,
            obs_in,
            ln_count,
        })
    }

    fn ln(&self, n: u64) -> f64 {
        self.ln_count[n as usize]
    }
}

/// Aggregates for one leaf: the only objective terms a split of this leaf can
/// change. `cells` holds touching transition cells with in-leaf endpoints
/// coded RIGHT, matching the sweep's initial all-right configuration.
struct LeafCtx {
    obs: Vec<u32>,
    state: Vec<u64>,
    dest: Vec<u64>,
    state_choice: Vec<u64>,
    origin_choice: Vec<u64>,
    cells: CellMap,
    /// Leaf contributions: decision sum, `sum n ln n` over touching cells,
    /// `sum n_dest ln n_state`, `sum n_oc ln n_oc`.
    dc: f64,
    a: f64,
    b: f64,
    c: f64,
}

fn build_leaf_contexts(engine: &EngineData, parts: &[u32], k: u32) -> Vec<LeafCtx> {
    let k = k as usize;
    let mut leaf_obs: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (row, &p) in parts.iter().enumerate() {
        leaf_obs[p as usize].push(row as u32);
    }
    let mut leaf_trans: Vec<Vec<u32>> = vec![Vec::new(); k];
    for t in 0..engine.trans_origin.len() {
        let po = parts[engine.trans_origin[t] as usize] as usize;
        let pd = parts[engine.trans_dest[t] as usize] as usize;
        leaf_trans[po].push(t as u32);
        if pd != po {
            leaf_trans[pd].push(t as u32);
        }
    }
    leaf_obs
        .into_iter()
        .zip(leaf_trans)
        .enumerate()
        .map(|(leaf, (obs, trans))| LeafCtx::build(engine, parts, leaf as u32, obs, trans))
        .collect()
}

impl LeafCtx {
    fn build(
        engine: &EngineData,
        parts: &[u32],
        leaf: u32,
        obs: Vec<u32>,
        trans: Vec<u32>,
    ) -> LeafCtx {
        let n_x = engine.n_x;
        let j_n = engine.n_choices;
        let mut state = vec![0u64; n_x];
        let mut dest = vec![0u64; n_x];
        let mut state_choice = vec![0u64; n_x * j_n];
        let mut origin_choice = vec![0u64; n_x * j_n];
        for &o in &obs {
            let o = o as usize;
            let x = engine.x_idx[o] as usize;
            let j = engine.decision[o] as usize;
            state[x] += 1;
            state_choice[x * j_n + j] += 1;
            if engine.obs_in[o] != NO_TRANSITION {
                dest[x] += 1;
            }
            if engine.obs_out[o] != NO_TRANSITION {
                origin_choice[x * j_n + j] += 1;
            }
        }
        let code = |row: usize| {
            if parts[row] == leaf {
                SIDE_RIGHT
            } else {
                parts[row] + EXTERNAL_BASE
            }
        };
        let mut cells = CellMap::default();
        for &t in &trans {
            let t = t as usize;
            let origin = engine.trans_origin[t] as usize;
            let d = engine.trans_dest[t] as usize;
            let key = pack(
                engine.x_idx[d],
                code(d),
                engine.x_idx[origin],
                code(origin),
                engine.decision[origin],
            );
            *cells.entry(key).or_insert(0) += 1;
        }

        let mut dc = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for x in 0..n_x {
            if state[x] == 0 {
                continue;
            }
            let ln_state = engine.ln(state[x]);
            for j in 0..j_n {
                let n = state_choice[x * j_n + j];
                if n > 0 {
                    dc += n as f64 * (engine.ln(n) - ln_state);
                }
                let oc = origin_choice[x * j_n + j];
                if oc > 0 {
                    c += oc as f64 * engine.ln(oc);
                }
            }
            if dest[x] > 0 {
                b += dest[x] as f64 * ln_state;
            }
        }
        // Sum the touching-cell term over sorted keys for a deterministic value.
        let mut keys: Vec<u64> = cells.keys().copied().collect();
        keys.sort_unstable();
        let mut a = 0.0;
        for key in keys {
            let n = cells[&key] as u64;
            a += n as f64 * engine.ln(n);
        }
        LeafCtx {
            obs,
            state,
            dest,
            state_choice,
            origin_choice,
            cells,
            dc,
            a,
            b,
            c,
        }
    }
}

/// Best candidate of one round.
#[derive(Debug, Clone, Copy)]
struct RoundBest {
    candidate: SplitCandidate,
    gain: SplitGain,
}

/// Tie-break: larger gain, then lower dimension, lower threshold, lower leaf.
fn better(a: &RoundBest, b: &RoundBest) -> bool {
    if a.gain.delta_combined != b.gain.delta_combined {
        return a.gain.delta_combined > b.gain.delta_combined;
    }
    if a.candidate.dim != b.candidate.dim {
        return a.candidate.dim < b.candidate.dim;
    }
    if a.candidate.threshold != b.candidate.threshold {
        return a.candidate.threshold < b.candidate.threshold;
    }
    a.candidate.partition < b.candidate.partition
}

fn search_round(
    engine: &EngineData,
    panel: &Panel,
    parts: &[u32],
    ctxs: &[LeafCtx],
    hp: &Hyperparameters,
    lambda: f64,
) -> Option<RoundBest> {
    let n_dims = panel.n_dims();
    let pairs: Vec<(u32, usize)> = (0..ctxs.len() as u32)
        .flat_map(|leaf| (0..n_dims).map(move |dim| (leaf, dim)))
        .collect();
    pairs
        .par_iter()
        .map(|&(leaf, dim)| sweep(engine, panel, parts, &ctxs[leaf as usize], leaf, dim, hp, lambda))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<RoundBest>, cand| match acc {
            Some(cur) if !better(&cand, &cur) => Some(cur),
            _ => Some(cand),
        })
}

/// Sweeps one (leaf, dimension) pair: observations move one by one from the
/// right child to the left in value order, and every affected objective sum is
/// maintained under the move. At each boundary between distinct values the
/// candidate gain is the difference between the running sums and the leaf's
/// unsplit contributions.
#[allow(clippy::too_many_arguments)]
fn sweep(
    engine: &EngineData,
    panel: &Panel,
    parts: &[u32],
    ctx: &LeafCtx,
    leaf: u32,
    dim: usize,
    hp: &Hyperparameters,
    lambda: f64,
) -> Option<RoundBest> {
    let n = ctx.obs.len();
    if n < 2 * hp.min_observations as usize {
        return None;
    }
    let j_n = engine.n_choices;
    let n_x = engine.n_x;

    let mut order: Vec<(f64, u32)> = ctx
        .obs
        .iter()
        .map(|&o| (panel.q_value(o as usize, dim), o))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if order[0].0 == order[n - 1].0 {
        return None; // constant dimension in this leaf
    }

    // Right side starts as the whole leaf; left side empty.
    let mut state_l = vec![0u64; n_x];
    let mut dest_l = vec![0u64; n_x];
    let mut sc_l = vec![0u64; n_x * j_n];
    let mut oc_l = vec![0u64; n_x * j_n];
    let mut state_r = ctx.state.clone();
    let mut dest_r = ctx.dest.clone();
    let mut sc_r = ctx.state_choice.clone();
    let mut oc_r = ctx.origin_choice.clone();
    let mut cells = ctx.cells.clone();
    // Side of each in-leaf observation, keyed by observation index.
    let mut left_side = vec![false; engine.obs_out.len()];

    let mut dc_run = ctx.dc;
    let mut a_run = ctx.a;
    let mut b_run = ctx.b;
    let mut c_run = ctx.c;

    let row_dc = |sc: &[u64], state: &[u64], x: usize| -> f64 {
        let st = state[x];
        if st == 0 {
            return 0.0;
        }
        let ln_st = engine.ln(st);
        let mut sum = 0.0;
        for j in 0..j_n {
            let v = sc[x * j_n + j];
            if v > 0 {
                sum += v as f64 * (engine.ln(v) - ln_st);
            }
        }
        sum
    };
    let b_term = |dest: &[u64], state: &[u64], x: usize| -> f64 {
        if dest[x] > 0 {
            dest[x] as f64 * engine.ln(state[x])
        } else {
            0.0
        }
    };
    let c_term = |oc: &[u64], x: usize, j: usize| -> f64 {
        let v = oc[x * j_n + j];
        if v > 0 {
            v as f64 * engine.ln(v)
        } else {
            0.0
        }
    };

    let mut best: Option<(f64, SplitGain)> = None;
    let mut moved = 0usize;
    let mut i = 0usize;
    while i < n {
        let value = order[i].0;
        if moved > 0 {
            let threshold = midpoint(order[i - 1].0, value);
            let left_n = moved as u64;
            let right_n = (n - moved) as u64;
            if left_n >= hp.min_observations && right_n >= hp.min_observations {
                let delta_decision = dc_run - ctx.dc;
                let delta_transition = (a_run - ctx.a) - (b_run - ctx.b) - (c_run - ctx.c);
                let delta = delta_decision + lambda * delta_transition;
                if best.map_or(true, |(_, g)| delta > g.delta_combined) {
                    best = Some((
                        threshold,
                        SplitGain {
                            delta_decision,
                            delta_transition,
                            delta_combined: delta,
                        },
                    ));
                }
            }
        }
        // Move every observation carrying this value from right to left.
        while i < n && order[i].0 == value {
            let o = order[i].1 as usize;
            let x = engine.x_idx[o] as usize;
            let j = engine.decision[o] as usize;
            let has_out = engine.obs_out[o] != NO_TRANSITION;
            let has_in = engine.obs_in[o] != NO_TRANSITION;

            dc_run -= row_dc(&sc_l, &state_l, x) + row_dc(&sc_r, &state_r, x);
            b_run -= b_term(&dest_l, &state_l, x) + b_term(&dest_r, &state_r, x);
            if has_out {
                c_run -= c_term(&oc_l, x, j) + c_term(&oc_r, x, j);
            }

            state_r[x] -= 1;
            state_l[x] += 1;
            sc_r[x * j_n + j] -= 1;
            sc_l[x * j_n + j] += 1;
            if has_in {
                dest_r[x] -= 1;
                dest_l[x] += 1;
            }
            if has_out {
                oc_r[x * j_n + j] -= 1;
                oc_l[x * j_n + j] += 1;
            }

            dc_run += row_dc(&sc_l, &state_l, x) + row_dc(&sc_r, &state_r, x);
            b_run += b_term(&dest_l, &state_l, x) + b_term(&dest_r, &state_r, x);
            if has_out {
                c_run += c_term(&oc_l, x, j) + c_term(&oc_r, x, j);
            }

            // Re-key the incident transition cells under the flipped side.
            let incident = [
                if has_out { engine.obs_out[o] } else { NO_TRANSITION },
                if has_in { engine.obs_in[o] } else { NO_TRANSITION },
            ];
            for &t in incident.iter().filter(|&&t| t != NO_TRANSITION) {
                let key = cell_key(engine, parts, leaf, t, &left_side);
                remove_cell(&mut cells, &mut a_run, engine, key);
            }
            left_side[o] = true;
            for &t in incident.iter().filter(|&&t| t != NO_TRANSITION) {
                let key = cell_key(engine, parts, leaf, t, &left_side);
                insert_cell(&mut cells, &mut a_run, engine, key);
            }

            moved += 1;
            i += 1;
        }
    }

    // Mirror check: with every observation on the left the grouping matches
    // the unsplit leaf again, so the running sums must return to the context
    // values up to accumulated rounding.
    debug_assert!((dc_run - ctx.dc).abs() <= 1e-6 * (1.0 + ctx.dc.abs()));
    debug_assert!((a_run - ctx.a).abs() <= 1e-6 * (1.0 + ctx.a.abs()));
    debug_assert!((b_run - ctx.b).abs() <= 1e-6 * (1.0 + ctx.b.abs()));
    debug_assert!((c_run - ctx.c).abs() <= 1e-6 * (1.0 + ctx.c.abs()));

    best.map(|(threshold, gain)| RoundBest {
        candidate: SplitCandidate {
            partition: leaf,
            dim,
            threshold,
        },
        gain,
    })
}

/// Current sweep key of transition `t`: in-leaf endpoints use their side code
/// (`left_side` is only meaningful for them), external endpoints their
/// partition id + 2.
fn cell_key(engine: &EngineData, parts: &[u32], leaf: u32, t: u32, left_side: &[bool]) -> u64 {
    let t = t as usize;
    let origin = engine.trans_origin[t] as usize;
    let dest = engine.trans_dest[t] as usize;
    let code = |o: usize| -> u32 {
        if parts[o] == leaf {
            if left_side[o] {
                SIDE_LEFT
            } else {
                SIDE_RIGHT
            }
        } else {
            parts[o] + EXTERNAL_BASE
        }
    };
    pack(
        engine.x_idx[dest],
        code(dest),
        engine.x_idx[origin],
        code(origin),
        engine.decision[origin],
    )
}

fn remove_cell(cells: &mut CellMap, a_run: &mut f64, engine: &EngineData, key: u64) {
    let n = cells.get_mut(&key).expect("cell present");
    *a_run -= (*n as f64) * engine.ln(*n as u64);
    *n -= 1;
    if *n == 0 {
        cells.remove(&key);
    } else {
        *a_run += (*n as f64) * engine.ln(*n as u64);
    }
}

fn insert_cell(cells: &mut CellMap, a_run: &mut f64, engine: &EngineData, key: u64) {
    let n = cells.entry(key).or_insert(0);
    if *n > 0 {
        *a_run -= (*n as f64) * engine.ln(*n as u64);
    }
    *n += 1;
    *a_run += (*n as f64) * engine.ln(*n as u64);
}
