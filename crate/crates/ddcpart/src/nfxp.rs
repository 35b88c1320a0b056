//! Nested fixed-point maximum-likelihood estimation on the discretized state
//! space. The inner loop solves the Bellman fixed point of the value function
//! by contraction iteration; the outer loop maximizes the decision
//! log-likelihood over the utility parameters with BFGS and exact gradients.
//!
//! The transition component of the likelihood is maximized analytically by the
//! frequency estimator and therefore dropped from the outer optimization: with
//! the transition table plugged in, only the choice probabilities depend on
//! the utility parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counts::CountTables;
use crate::error::{Error, Result};
use crate::optim::{self, BfgsOptions};
use crate::panel::Panel;
use crate::tree::Discretization;

/// The discretized state space `X x {0..k-1}`, indexed row-major by x then
/// partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub x_min: i64,
    pub x_max: i64,
    pub n_partitions: u32,
}

impl StateSpace {
    pub fn n_states(&self) -> usize {
        ((self.x_max - self.x_min + 1) as usize) * self.n_partitions as usize
    }

    pub fn index(&self, x: i64, partition: u32) -> usize {
        debug_assert!(x >= self.x_min && x <= self.x_max && partition < self.n_partitions);
        ((x - self.x_min) as usize) * self.n_partitions as usize + partition as usize
    }

    pub fn state(&self, index: usize) -> (i64, u32) {
        let k = self.n_partitions as usize;
        (self.x_min + (index / k) as i64, (index % k) as u32)
    }

    pub fn x_value(&self, index: usize) -> f64 {
        (self.x_min + (index / self.n_partitions as usize) as i64) as f64
    }
}

/// Converged expected value function on the discretized state space.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub space: StateSpace,
    pub beta: f64,
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn value(&self, x: i64, partition: u32) -> f64 {
        self.values[self.space.index(x, partition)]
    }
}

/// State transition table over (state, choice) rows in CSR layout. Rows are
/// probability distributions over destination states.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    pub space: StateSpace,
    pub n_choices: u16,
    row_ptr: Vec<u32>,
    dest: Vec<u32>,
    prob: Vec<f64>,
    /// Whether the row came from observed transitions (as opposed to the
    /// deterministic-mileage fallback used to complete the table).
    observed: Vec<bool>,
}

impl TransitionTable {
    fn empty(space: StateSpace, n_choices: u16) -> Self {
        let rows = space.n_states() * n_choices as usize;
        TransitionTable {
            space,
            n_choices,
            row_ptr: vec![0; rows + 1],
            dest: Vec::new(),
            prob: Vec::new(),
            observed: vec![false; rows],
        }
    }

    /// Builds a table from a row generator; used for true data-generating
    /// processes where the dynamics are known exactly.
    pub fn from_rows<F>(space: StateSpace, n_choices: u16, mut rows: F) -> Result<Self>
    where
        F: FnMut(usize, u16) -> Vec<(usize, f64)>,
    {
        let mut table = TransitionTable::empty(space, n_choices);
        let mut entries: Vec<Vec<(usize, f64)>> =
            Vec::with_capacity(space.n_states() * n_choices as usize);
        for s in 0..space.n_states() {
            for j in 0..n_choices {
                entries.push(rows(s, j));
            }
        }
        table.fill(entries, true)?;
        Ok(table)
    }

    fn fill(&mut self, rows: Vec<Vec<(usize, f64)>>, observed: bool) -> Result<()> {
        let n_rows = self.space.n_states() * self.n_choices as usize;
        debug_assert_eq!(rows.len(), n_rows);
        self.row_ptr = Vec::with_capacity(n_rows + 1);
        self.row_ptr.push(0);
        self.dest.clear();
        self.prob.clear();
        for row in rows {
            for (d, p) in row {
                if p < 0.0 || !p.is_finite() {
                    return Err(Error::Validation(
                        "transition probabilities must be finite and nonnegative".into(),
                    ));
                }
                self.dest.push(d as u32);
                self.prob.push(p);
            }
            self.row_ptr.push(self.dest.len() as u32);
        }
        self.observed = vec![observed; n_rows];
        Ok(())
    }

    pub fn row(&self, state: usize, choice: u16) -> (&[u32], &[f64]) {
        let r = state * self.n_choices as usize + choice as usize;
        let (lo, hi) = (self.row_ptr[r] as usize, self.row_ptr[r + 1] as usize);
        (&self.dest[lo..hi], &self.prob[lo..hi])
    }

    pub fn is_observed(&self, state: usize, choice: u16) -> bool {
        self.observed[state * self.n_choices as usize + choice as usize]
    }

    /// Sum of a row; 0 for an empty (never observed, not yet completed) row.
    pub fn row_sum(&self, state: usize, choice: u16) -> f64 {
        self.row(state, choice).1.iter().sum()
    }

    fn validate_stochastic(&self) -> Result<()> {
        for s in 0..self.space.n_states() {
            for j in 0..self.n_choices {
                let (dests, probs) = self.row(s, j);
                if dests.is_empty() {
                    let (x, p) = self.space.state(s);
                    return Err(Error::Validation(format!(
                        "transition row for state (x={x}, partition={p}), choice {j} is empty"
                    )));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-8 {
                    let (x, p) = self.space.state(s);
                    return Err(Error::Validation(format!(
                        "transition row for state (x={x}, partition={p}), choice {j} sums to {sum}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Nonparametric transition estimate: relative frequencies of observed moves,
/// `g(dest | origin, choice) = N(dest, origin, choice) / N(origin, choice)`.
/// Rows for origins never observed stay empty; see
/// [`complete_transition_table`] for the completion used by the estimator.
pub fn estimate_transition(counts: &CountTables) -> TransitionTable {
    let space = StateSpace {
        x_min: counts.x_min,
        x_max: counts.x_max,
        n_partitions: counts.n_partitions,
    };
    let n_choices = counts.n_choices;
    let n_rows = space.n_states() * n_choices as usize;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
    let mut seen = vec![false; n_rows];
    for (key, &n) in counts.transitions() {
        let origin = space.index(key.origin_x, key.origin_partition);
        let total = counts.n_origin_choice(key.origin_x, key.origin_partition, key.choice);
        let r = origin * n_choices as usize + key.choice as usize;
        rows[r].push((
            space.index(key.dest_x, key.dest_partition),
            n as f64 / total as f64,
        ));
        seen[r] = true;
    }
    let mut table = TransitionTable::empty(space, n_choices);
    table.row_ptr = Vec::with_capacity(n_rows + 1);
    table.row_ptr.push(0);
    for row in rows {
        for (d, p) in row {
            table.dest.push(d as u32);
            table.prob.push(p);
        }
        table.row_ptr.push(table.dest.len() as u32);
    }
    table.observed = seen;
    table
}

/// Filled-in rows reported by [`complete_transition_table`].
#[derive(Debug, Clone, Default)]
pub struct CompletionReport {
    /// Number of (state, choice) rows completed by the fallback rule.
    pub fallback_rows: usize,
    /// States that never occur in the data; their values are defined entirely
    /// through the fallback dynamics.
    pub unvisited_states: Vec<(i64, u32)>,
}

/// Completes empty rows of an estimated transition table so the Bellman
/// operator is total. The fallback follows the within-X deterministic mileage
/// rule: choice 1 (replace) restarts the mileage at the partition's estimated
/// increment, every other choice advances it, both clamped to the X-range.
/// The partition hop distribution is pooled across the partition's observed
/// transitions; partitions without any observed transition stay put.
pub fn complete_transition_table(
    table: &mut TransitionTable,
    counts: &CountTables,
) -> CompletionReport {
    let space = table.space;
    let k = space.n_partitions;
    let n_choices = table.n_choices;

    // Modal mileage increment per partition from unclamped keep transitions.
    let mut increment_votes = vec![std::collections::BTreeMap::<i64, u64>::new(); k as usize];
    let mut hop_counts = vec![vec![0u64; k as usize]; k as usize];
    let mut hop_totals = vec![0u64; k as usize];
    for (key, &n) in counts.transitions() {
        hop_counts[key.origin_partition as usize][key.dest_partition as usize] += n;
        hop_totals[key.origin_partition as usize] += n;
        if key.choice != 1 && key.dest_x < space.x_max {
            let inc = key.dest_x - key.origin_x;
            if inc >= 0 {
                *increment_votes[key.origin_partition as usize]
                    .entry(inc)
                    .or_insert(0) += n;
            }
        }
    }
    let increments: Vec<i64> = increment_votes
        .iter()
        .map(|votes| {
            votes
                .iter()
                .max_by_key(|(inc, n)| (**n, std::cmp::Reverse(**inc)))
                .map(|(inc, _)| *inc)
                .unwrap_or(1)
        })
        .collect();

    let mut report = CompletionReport::default();
    for s in 0..space.n_states() {
        let (x, p) = space.state(s);
        if counts.n_state(x, p) == 0 {
            report.unvisited_states.push((x, p));
        }
    }

    // Rebuild rows, substituting the fallback where a row is empty.
    let n_rows = space.n_states() * n_choices as usize;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_rows);
    let mut observed = Vec::with_capacity(n_rows);
    for s in 0..space.n_states() {
        let (x, p) = space.state(s);
        for j in 0..n_choices {
            let (dests, probs) = table.row(s, j);
            if !dests.is_empty() {
                rows.push(dests.iter().map(|d| *d as usize).zip(probs.iter().copied()).collect());
                observed.push(table.is_observed(s, j));
                continue;
            }
            report.fallback_rows += 1;
            observed.push(false);
            let inc = increments[p as usize];
            let next_x = if j == 1 {
                inc.clamp(space.x_min, space.x_max)
            } else {
                (x + inc).min(space.x_max)
            };
            let row: Vec<(usize, f64)> = if hop_totals[p as usize] > 0 {
                hop_counts[p as usize]
                    .iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .map(|(dest_p, &n)| {
                        (
                            space.index(next_x, dest_p as u32),
                            n as f64 / hop_totals[p as usize] as f64,
                        )
                    })
                    .collect()
            } else {
                vec![(space.index(next_x, p), 1.0)]
            };
            rows.push(row);
        }
    }
    let mut rebuilt = TransitionTable::empty(space, n_choices);
    rebuilt.fill(rows, false).expect("fallback rows are valid");
    rebuilt.observed = observed;
    *table = rebuilt;
    report
}

/// Numerically stable `ln(sum(exp(values)))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Solves the Bellman fixed point
/// `V(s) = ln sum_j exp(u(s,j) + beta * sum_d g(d|s,j) V(d))`
/// by Jacobi iteration, stopping when the sup-norm step falls below
/// `tolerance * (1 - beta) / beta`, which bounds the distance to the fixed
/// point by `tolerance`.
pub fn value_iteration(
    utilities: &[f64],
    transitions: &TransitionTable,
    beta: f64,
    tolerance: f64,
) -> Result<ValueFunction> {
    let space = transitions.space;
    let mut values = vec![0.0; space.n_states()];
    let iterations = value_iteration_in_place(utilities, transitions, beta, tolerance, &mut values)?;
    let _ = iterations;
    Ok(ValueFunction {
        space,
        beta,
        values,
    })
}

/// In-place variant used for warm starts; returns the number of sweeps.
fn value_iteration_in_place(
    utilities: &[f64],
    transitions: &TransitionTable,
    beta: f64,
    tolerance: f64,
    values: &mut Vec<f64>,
) -> Result<usize> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!(
            "discount factor must lie in [0,1), got {beta}"
        )));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let space = transitions.space;
    let n_states = space.n_states();
    let n_choices = transitions.n_choices as usize;
    if utilities.len() != n_states * n_choices {
        return Err(Error::DimensionMismatch {
            expected: n_states * n_choices,
            got: utilities.len(),
        });
    }
    transitions.validate_stochastic()?;
    if values.len() != n_states {
        *values = vec![0.0; n_states];
    }

    let stop = if beta == 0.0 {
        f64::INFINITY
    } else {
        tolerance * (1.0 - beta) / beta
    };
    let mut next = vec![0.0; n_states];
    let mut scratch = vec![0.0; n_choices];
    for sweep in 1..=2_000_000usize {
        let mut max_diff = 0.0f64;
        for s in 0..n_states {
            for (j, slot) in scratch.iter_mut().enumerate() {
                let (dests, probs) = transitions.row(s, j as u16);
                let mut expected = 0.0;
                for (d, p) in dests.iter().zip(probs) {
                    expected += values[*d as usize] * p;
                }
                *slot = utilities[s * n_choices + j] + beta * expected;
            }
            next[s] = log_sum_exp(&scratch);
            max_diff = max_diff.max((next[s] - values[s]).abs());
        }
        std::mem::swap(values, &mut next);
        if beta == 0.0 || max_diff < stop {
            return Ok(sweep);
        }
    }
    Err(Error::Validation(
        "value iteration failed to converge within the sweep budget".into(),
    ))
}

/// Choice-specific values `v(s,j) = u(s,j) + beta * E[V | s,j]`.
pub fn choice_values(
    utilities: &[f64],
    transitions: &TransitionTable,
    value: &ValueFunction,
) -> Vec<f64> {
    let n_states = transitions.space.n_states();
    let n_choices = transitions.n_choices as usize;
    let mut out = vec![0.0; n_states * n_choices];
    for s in 0..n_states {
        for j in 0..n_choices {
            let (dests, probs) = transitions.row(s, j as u16);
            let mut expected = 0.0;
            for (d, p) in dests.iter().zip(probs) {
                expected += value.values[*d as usize] * p;
            }
            out[s * n_choices + j] = utilities[s * n_choices + j] + value.beta * expected;
        }
    }
    out
}

/// Logit choice probabilities `p(j|s) = exp v(s,j) / sum_j' exp v(s,j')`,
/// row-normalized with max subtraction.
pub fn choice_probabilities(
    value: &ValueFunction,
    utilities: &[f64],
    transitions: &TransitionTable,
) -> Vec<f64> {
    let v = choice_values(utilities, transitions, value);
    softmax_rows(&v, transitions.n_choices as usize)
}

fn softmax_rows(values: &[f64], n_choices: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (row_out, row_in) in out.chunks_mut(n_choices).zip(values.chunks(n_choices)) {
        let max = row_in.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, v) in row_out.iter_mut().zip(row_in) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in row_out.iter_mut() {
            *o /= sum;
        }
    }
    out
}

/// Utility parameterization of the flow utilities on the discretized space.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilityModel {
    /// Two-choice model: keeping costs `maintenance_coef * x` per period
    /// (the coefficient itself is negative for a cost), replacing yields the
    /// per-partition `replacement_utility`.
    BusLinear {
        maintenance_coef: f64,
        replacement_utility: Vec<f64>,
    },
    /// One free utility level per (state, choice) with choice 0 normalized
    /// to zero inside the estimator.
    Nonparametric { utilities: Vec<f64> },
}

impl UtilityModel {
    /// Dense `S x J` flow utility table.
    pub fn utilities(&self, space: &StateSpace, n_choices: u16) -> Result<Vec<f64>> {
        match self {
            UtilityModel::BusLinear {
                maintenance_coef,
                replacement_utility,
            } => {
                if n_choices != 2 {
                    return Err(Error::InvalidArgument(
                        "the linear bus model requires exactly 2 choices".into(),
                    ));
                }
                if replacement_utility.len() != space.n_partitions as usize {
                    return Err(Error::DimensionMismatch {
                        expected: space.n_partitions as usize,
                        got: replacement_utility.len(),
                    });
                }
                let n = space.n_states();
                let mut u = vec![0.0; n * 2];
                for s in 0..n {
                    let (_, p) = space.state(s);
                    u[s * 2] = maintenance_coef * space.x_value(s);
                    u[s * 2 + 1] = replacement_utility[p as usize];
                }
                Ok(u)
            }
            UtilityModel::Nonparametric { utilities } => {
                if utilities.len() != space.n_states() * n_choices as usize {
                    return Err(Error::DimensionMismatch {
                        expected: space.n_states() * n_choices as usize,
                        got: utilities.len(),
                    });
                }
                Ok(utilities.clone())
            }
        }
    }
}

/// Which utility parameterization the estimator fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ModelSpec {
    BusLinear,
    Nonparametric,
}

/// Outer-loop controls for [`estimate_theta`].
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    /// Sup-norm bound on the inner value-function solve.
    pub value_tolerance: f64,
    /// Outer convergence: Euclidean norm of the likelihood gradient.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Jittered restarts of the outer ascent; the best converged run wins.
    pub restarts: usize,
    pub jitter_scale: f64,
    pub jitter_seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            value_tolerance: 1e-11,
            gradient_tolerance: 1e-6,
            max_iterations: 400,
            restarts: 3,
            jitter_scale: 0.5,
            jitter_seed: 0,
        }
    }
}

/// Structural estimate: fitted utility parameters, the nonparametric
/// transition table, and solver diagnostics.
#[derive(Debug, Clone)]
pub struct ThetaEstimate {
    pub model: UtilityModel,
    pub space: StateSpace,
    /// Decision component of the log-likelihood at the optimum.
    pub log_likelihood: f64,
    /// Transition component `sum n ln(n / N(origin, choice))`, maximized
    /// analytically by the frequency estimator.
    pub transition_log_likelihood: f64,
    /// Outer-product-of-gradients standard errors for the parameter vector
    /// (bus-linear model only).
    pub standard_errors: Option<Vec<f64>>,
    pub value_function: ValueFunction,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Diagnostics from completing the transition table.
    pub completion: CompletionReport,
}

impl ThetaEstimate {
    pub fn maintenance_coef(&self) -> Option<f64> {
        match &self.model {
            UtilityModel::BusLinear {
                maintenance_coef, ..
            } => Some(*maintenance_coef),
            UtilityModel::Nonparametric { .. } => None,
        }
    }

    pub fn replacement_utilities(&self) -> Option<&[f64]> {
        match &self.model {
            UtilityModel::BusLinear {
                replacement_utility,
                ..
            } => Some(replacement_utility),
            UtilityModel::Nonparametric { .. } => None,
        }
    }
}

/// Maximum-likelihood estimation of the utility parameters on the discretized
/// state space, with the nonparametric transition estimate plugged in.
///
/// The outer loop is BFGS on the decision log-likelihood with analytic
/// gradients obtained from the implicit (adjoint) differentiation of the
/// Bellman fixed point; each trial solves the inner fixed point warm-started
/// from the previous trial.
pub fn estimate_theta(
    panel: &Panel,
    disc: &Discretization,
    beta: f64,
    spec: ModelSpec,
    options: &EstimateOptions,
) -> Result<ThetaEstimate> {
    let counts = crate::counts::count_tables(panel, disc)?;
    estimate_theta_from_counts(&counts, beta, spec, options)
}

/// [`estimate_theta`] on precomputed count tables.
pub fn estimate_theta_from_counts(
    counts: &CountTables,
    beta: f64,
    spec: ModelSpec,
    options: &EstimateOptions,
) -> Result<ThetaEstimate> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!(
            "discount factor must lie in [0,1), got {beta}"
        )));
    }
    let mut likelihood = DecisionLikelihood::new(counts, beta, spec, options.value_tolerance)?;
    let space = likelihood.space();
    let n_choices = counts.n_choices;
    let n_params = likelihood.n_params();

    let bfgs_options = BfgsOptions {
        gradient_tolerance: options.gradient_tolerance,
        max_iterations: options.max_iterations,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(options.jitter_seed);
    let mut best: Option<optim::BfgsOutcome> = None;
    let mut total_iterations = 0usize;
    for restart in 0..options.restarts.max(1) {
        let mut theta0 = vec![0.0; n_params];
        if restart > 0 {
            for t in theta0.iter_mut() {
                *t = (rng.gen::<f64>() * 2.0 - 1.0) * options.jitter_scale;
            }
        }
        let outcome = optim::maximize(|theta| likelihood.eval(theta), &theta0, &bfgs_options);
        total_iterations += outcome.iterations;
        let replace = match &best {
            None => true,
            Some(b) => {
                (outcome.converged && !b.converged)
                    || (outcome.converged == b.converged && outcome.value > b.value)
            }
        };
        if replace {
            best = Some(outcome);
        }
    }
    let best = best.unwrap();

    let model = unpack_model(&best.x, spec, &space, n_choices);
    let utilities = model.utilities(&space, n_choices)?;
    let transitions = likelihood.transitions();
    let value_function = value_iteration(&utilities, transitions, beta, options.value_tolerance)?;
    let transition_log_likelihood = transition_component(counts);

    let standard_errors = match spec {
        ModelSpec::BusLinear => opg_standard_errors(
            &best.x,
            spec,
            &decision_cells(counts, &space),
            &utilities,
            transitions,
            &value_function,
        ),
        ModelSpec::Nonparametric => None,
    };

    let estimate = ThetaEstimate {
        model,
        space,
        log_likelihood: best.value,
        transition_log_likelihood,
        standard_errors,
        value_function,
        gradient_norm: best.gradient_norm,
        iterations: total_iterations,
        completion: likelihood.completion().clone(),
    };
    if !best.converged {
        return Err(Error::NoConvergence {
            iterations: total_iterations,
            gradient_norm: best.gradient_norm,
            log_likelihood: best.value,
            best: Box::new(estimate),
        });
    }
    Ok(estimate)
}

fn transition_component(counts: &CountTables) -> f64 {
    let mut total = 0.0;
    for (key, &n) in counts.transitions() {
        let origin = counts.n_origin_choice(key.origin_x, key.origin_partition, key.choice);
        total += n as f64 * ((n as f64).ln() - (origin as f64).ln());
    }
    total
}

fn unpack_model(theta: &[f64], spec: ModelSpec, space: &StateSpace, n_choices: u16) -> UtilityModel {
    match spec {
        ModelSpec::BusLinear => UtilityModel::BusLinear {
            maintenance_coef: theta[0],
            replacement_utility: theta[1..].to_vec(),
        },
        ModelSpec::Nonparametric => {
            let n = space.n_states();
            let j_n = n_choices as usize;
            let mut utilities = vec![0.0; n * j_n];
            for s in 0..n {
                for j in 1..j_n {
                    utilities[s * j_n + j] = theta[s * (j_n - 1) + (j - 1)];
                }
            }
            UtilityModel::Nonparametric { utilities }
        }
    }
}

fn decision_cells(counts: &CountTables, space: &StateSpace) -> Vec<(usize, u16, u64)> {
    counts
        .state_choices()
        .map(|(&(x, p, j), &n)| (space.index(x, p), j, n))
        .collect()
}

/// Decision log-likelihood of a panel on the discretized space as a function
/// of the utility parameters, with an exact gradient from the adjoint of the
/// Bellman fixed point. Inner fixed points are warm-started across calls, so
/// repeated evaluations along an optimization path are cheap.
pub struct DecisionLikelihood {
    transitions: TransitionTable,
    completion: CompletionReport,
    spec: ModelSpec,
    space: StateSpace,
    n_choices: usize,
    beta: f64,
    value_tolerance: f64,
    cells: Vec<(usize, u16, u64)>,
    /// Total observations per state (decision denominators).
    n_per_state: Vec<f64>,
    /// Observed per-(state, choice) counts as a dense table.
    n_cell: Vec<f64>,
    values: Vec<f64>,
    adjoint: Vec<f64>,
}

impl DecisionLikelihood {
    /// Builds the evaluator: estimates the transition table from `counts`,
    /// completes its empty rows, and indexes the decision cells.
    pub fn new(
        counts: &CountTables,
        beta: f64,
        spec: ModelSpec,
        value_tolerance: f64,
    ) -> Result<Self> {
        if counts.n_choices < 2 {
            return Err(Error::Degenerate(
                "a single-choice panel carries no decision information".into(),
            ));
        }
        if spec == ModelSpec::BusLinear && counts.n_choices != 2 {
            return Err(Error::InvalidArgument(
                "the linear bus model requires exactly 2 choices".into(),
            ));
        }
        let mut transitions = estimate_transition(counts);
        let completion = complete_transition_table(&mut transitions, counts);
        let space = transitions.space;
        let n_states = space.n_states();
        let n_choices = transitions.n_choices as usize;
        let cells = decision_cells(counts, &space);
        let mut n_per_state = vec![0.0; n_states];
        let mut n_cell = vec![0.0; n_states * n_choices];
        for &(s, j, n) in &cells {
            n_per_state[s] += n as f64;
            n_cell[s * n_choices + j as usize] += n as f64;
        }
        Ok(DecisionLikelihood {
            transitions,
            completion,
            spec,
            space,
            n_choices,
            beta,
            value_tolerance,
            cells,
            n_per_state,
            n_cell,
            values: vec![0.0; n_states],
            adjoint: vec![0.0; n_states],
        })
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn n_params(&self) -> usize {
        match self.spec {
            ModelSpec::BusLinear => 1 + self.space.n_partitions as usize,
            ModelSpec::Nonparametric => self.space.n_states() * (self.n_choices - 1),
        }
    }

    /// The completed transition table the likelihood is evaluated under.
    pub fn transitions(&self) -> &TransitionTable {
        &self.transitions
    }

    pub fn completion(&self) -> &CompletionReport {
        &self.completion
    }

    /// Log-likelihood and gradient at `theta`.
    pub fn eval(&mut self, theta: &[f64]) -> (f64, Vec<f64>) {
        let spec = self.spec;
        let model = unpack_model(theta, spec, &self.space, self.n_choices as u16);
        let utilities = model
            .utilities(&self.space, self.n_choices as u16)
            .expect("parameter vector matches the model layout");
        if value_iteration_in_place(
            &utilities,
            &self.transitions,
            self.beta,
            self.value_tolerance,
            &mut self.values,
        )
        .is_err()
        {
            return (f64::NEG_INFINITY, vec![0.0; theta.len()]);
        }
        let value = ValueFunction {
            space: self.space,
            beta: self.beta,
            values: self.values.clone(),
        };
        let v = choice_values(&utilities, &self.transitions, &value);
        let p = softmax_rows(&v, self.n_choices);

        let mut loglik = 0.0;
        for &(s, j, n) in &self.cells {
            loglik += n as f64 * p[s * self.n_choices + j as usize].ln();
        }

        // Adjoint pass: alpha(s,j) = n(s,j) - N(s) p(s,j); the gradient is
        // sum_{s,j} mu(s,j) du(s,j) with mu = alpha + p * lambda and lambda the
        // fixed point of lambda(d) = beta * sum_{s,j} mu(s,j) g(d|s,j).
        let n_states = self.space.n_states();
        let mut alpha = vec![0.0; n_states * self.n_choices];
        for s in 0..n_states {
            if self.n_per_state[s] == 0.0 {
                continue;
            }
            for j in 0..self.n_choices {
                alpha[s * self.n_choices + j] = self.n_cell[s * self.n_choices + j]
                    - self.n_per_state[s] * p[s * self.n_choices + j];
            }
        }
        if self.beta == 0.0 {
            self.adjoint.iter_mut().for_each(|a| *a = 0.0);
        } else {
            let mut next = vec![0.0; n_states];
            for _ in 0..2_000_000usize {
                next.iter_mut().for_each(|v| *v = 0.0);
                for s in 0..n_states {
                    let lam = self.adjoint[s];
                    for j in 0..self.n_choices {
                        let mu =
                            alpha[s * self.n_choices + j] + p[s * self.n_choices + j] * lam;
                        if mu == 0.0 {
                            continue;
                        }
                        let (dests, probs) = self.transitions.row(s, j as u16);
                        for (d, g) in dests.iter().zip(probs) {
                            next[*d as usize] += self.beta * mu * g;
                        }
                    }
                }
                let l1: f64 = next
                    .iter()
                    .zip(&self.adjoint)
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                let scale: f64 = next.iter().map(|a| a.abs()).sum::<f64>() + 1.0;
                std::mem::swap(&mut self.adjoint, &mut next);
                if l1 < 1e-10 * scale {
                    break;
                }
            }
        }

        let mut grad = vec![0.0; theta.len()];
        match spec {
            ModelSpec::BusLinear => {
                for s in 0..n_states {
                    let lam = self.adjoint[s];
                    let (_, partition) = self.space.state(s);
                    let mu0 = alpha[s * self.n_choices] + p[s * self.n_choices] * lam;
                    let mu1 = alpha[s * self.n_choices + 1] + p[s * self.n_choices + 1] * lam;
                    grad[0] += mu0 * self.space.x_value(s);
                    grad[1 + partition as usize] += mu1;
                }
            }
            ModelSpec::Nonparametric => {
                for s in 0..n_states {
                    let lam = self.adjoint[s];
                    for j in 1..self.n_choices {
                        let mu =
                            alpha[s * self.n_choices + j] + p[s * self.n_choices + j] * lam;
                        grad[s * (self.n_choices - 1) + (j - 1)] = mu;
                    }
                }
            }
        }
        (loglik, grad)
    }
}

/// Outer-product-of-gradients standard errors at the optimum for the
/// bus-linear parameter vector `(maintenance_coef, replacement utilities...)`.
fn opg_standard_errors(
    theta: &[f64],
    spec: ModelSpec,
    cells: &[(usize, u16, u64)],
    utilities: &[f64],
    transitions: &TransitionTable,
    value: &ValueFunction,
) -> Option<Vec<f64>> {
    debug_assert_eq!(spec, ModelSpec::BusLinear);
    let space = transitions.space;
    let n_states = space.n_states();
    let n_choices = transitions.n_choices as usize;
    let m = theta.len();
    let beta = value.beta;
    let p = softmax_rows(&choice_values(utilities, transitions, value), n_choices);

    // Forward sensitivities dV/dtheta via the policy-weighted fixed point
    // dV(s) = sum_j p(s,j) [du(s,j) + beta sum_d g(d|s,j) dV(d)].
    let du = |s: usize, j: usize, param: usize| -> f64 {
        if param == 0 {
            if j == 0 {
                space.x_value(s)
            } else {
                0.0
            }
        } else if j == 1 && space.state(s).1 as usize == param - 1 {
            1.0
        } else {
            0.0
        }
    };
    let mut dv = vec![0.0; n_states * m];
    let mut next = vec![0.0; n_states * m];
    for _ in 0..1_000_000usize {
        let mut max_diff = 0.0f64;
        for s in 0..n_states {
            let row = &mut next[s * m..(s + 1) * m];
            row.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..n_choices {
                let pj = p[s * n_choices + j];
                if pj == 0.0 {
                    continue;
                }
                let (dests, probs) = transitions.row(s, j as u16);
                for param in 0..m {
                    let mut dvj = du(s, j, param);
                    let mut expected = 0.0;
                    for (d, g) in dests.iter().zip(probs) {
                        expected += dv[*d as usize * m + param] * g;
                    }
                    dvj += beta * expected;
                    row[param] += pj * dvj;
                }
            }
        }
        for (a, b) in next.iter().zip(&dv) {
            max_diff = max_diff.max((a - b).abs());
        }
        std::mem::swap(&mut dv, &mut next);
        if max_diff < 1e-11 {
            break;
        }
    }

    // Per-cell scores d ln p(j|s) = dv(s,j) - dV(s).
    let mut opg = vec![0.0; m * m];
    let mut score = vec![0.0; m];
    for &(s, j, n) in cells {
        for param in 0..m {
            let mut dvj = du(s, j as usize, param);
            let (dests, probs) = transitions.row(s, j);
            let mut expected = 0.0;
            for (d, g) in dests.iter().zip(probs) {
                expected += dv[*d as usize * m + param] * g;
            }
            dvj += beta * expected;
            score[param] = dvj - dv[s * m + param];
        }
        for a in 0..m {
            for b in 0..m {
                opg[a * m + b] += n as f64 * score[a] * score[b];
            }
        }
    }
    let inverse = optim::invert_symmetric(&opg, m)?;
    Some((0..m).map(|i| inverse[i * m + i].max(0.0).sqrt()).collect())
}
