//! Nonparametric split objective: the decision and transition log-likelihood
//! components, their scale-free weighting, and the smoothed out-of-sample
//! score used for hyperparameter selection.
//!
//! Both components are sums of `n * ln(p)` terms with `p` in `(0, 1]`, so they
//! are nonpositive; `0 * ln 0` is taken as 0 throughout.

use crate::counts::CountTables;
use crate::error::{Error, Result};

/// The combined split objective at one discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    /// Decision component (nonpositive).
    pub decision: f64,
    /// Transition component (nonpositive).
    pub transition: f64,
    /// Scale normalizer: |decision/transition| at the root discretization.
    pub lambda_adjust: f64,
    /// Relative weight of the transition component (hyperparameter).
    pub lambda_rel: f64,
    /// `decision + lambda_adjust * lambda_rel * transition`.
    pub combined: f64,
}

/// Additive smoothing used only in out-of-sample scoring: every possible
/// outcome is treated as seen at least `delta` times.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmoothingConfig {
    pub delta: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { delta: 1e-5 }
    }
}

/// Decision log-likelihood: sum over occupied `(x, partition, choice)` cells of
/// `n * ln(n / N(x, partition))`.
pub fn decision_loglik(counts: &CountTables) -> f64 {
    let mut total = 0.0;
    for (&(x, p, _), &n) in counts.state_choices() {
        let state = counts.n_state(x, p);
        total += n as f64 * ((n as f64).ln() - (state as f64).ln());
    }
    total
}

/// Transition log-likelihood: sum over occupied transition cells of
/// `n * ln(n / (N(dest state) * N(origin state, choice)))`, where the origin
/// count is restricted to observations that have a successor period.
pub fn transition_loglik(counts: &CountTables) -> f64 {
    let mut total = 0.0;
    for (key, &n) in counts.transitions() {
        let dest_state = counts.n_state(key.dest_x, key.dest_partition);
        let origin = counts.n_origin_choice(key.origin_x, key.origin_partition, key.choice);
        total += n as f64
            * ((n as f64).ln() - (dest_state as f64).ln() - (origin as f64).ln());
    }
    total
}

/// Scale normalizer computed once at the root discretization: the ratio of the
/// decision to the transition component there. Both are nonpositive, so the
/// ratio is nonnegative.
///
/// Errors when the transition component is exactly zero (the transition data
/// carries no information); the caller should then drop the transition term.
pub fn lambda_adjust(counts_at_root: &CountTables) -> Result<f64> {
    let dc = decision_loglik(counts_at_root);
    let tr = transition_loglik(counts_at_root);
    if tr == 0.0 {
        return Err(Error::Degenerate(
            "transition log-likelihood is zero at the root; set the transition weight to zero"
                .into(),
        ));
    }
    Ok((dc / tr).abs())
}

/// Evaluates the combined objective on one count table.
pub fn objective(counts: &CountTables, lambda_rel: f64, lambda_adjust: f64) -> Result<ObjectiveValue> {
    if lambda_rel < 0.0 || lambda_adjust < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "objective weights must be nonnegative (lambda_rel={lambda_rel}, lambda_adjust={lambda_adjust})"
        )));
    }
    let decision = decision_loglik(counts);
    let transition = transition_loglik(counts);
    Ok(ObjectiveValue {
        decision,
        transition,
        lambda_adjust,
        lambda_rel,
        combined: decision + lambda_adjust * lambda_rel * transition,
    })
}

/// Out-of-sample score: validation counts weighted by smoothed training
/// probabilities, normalized by `1/(1+lambda_rel)`.
///
/// Smoothing adds `delta` to every event count and `delta * (number of
/// possible outcomes)` to the matching denominator: choices have `J` outcomes,
/// transitions out of an origin have `|X| * k` outcomes.
///
/// With `delta = 0`, a validation event unseen in training makes the score
/// negative infinity; that sentinel is returned rather than an error.
pub fn validation_score(
    train: &CountTables,
    validation: &CountTables,
    lambda_rel: f64,
    lambda_adjust_val: f64,
    smoothing: SmoothingConfig,
) -> Result<f64> {
    if lambda_rel < 0.0 || lambda_adjust_val < 0.0 {
        return Err(Error::InvalidArgument(
            "score weights must be nonnegative".into(),
        ));
    }
    if smoothing.delta < 0.0 {
        return Err(Error::InvalidArgument(
            "smoothing delta must be nonnegative".into(),
        ));
    }
    if train.n_partitions != validation.n_partitions
        || train.n_choices != validation.n_choices
        || train.x_span() != validation.x_span()
    {
        return Err(Error::Validation(
            "train and validation counts must be built on the same discretization and domain"
                .into(),
        ));
    }
    let delta = smoothing.delta;
    let choice_outcomes = train.n_choices as f64;
    let transition_outcomes = (train.x_span() as f64) * (train.n_partitions as f64);

    let mut decision_part = 0.0;
    for (&(x, p, j), &n_val) in validation.state_choices() {
        let numerator = train.n_state_choice(x, p, j) as f64 + delta;
        if numerator <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let denominator = train.n_state(x, p) as f64 + delta * choice_outcomes;
        decision_part += n_val as f64 * (numerator.ln() - denominator.ln());
    }

    let mut transition_part = 0.0;
    for (key, &n_val) in validation.transitions() {
        let numerator = train.n_transition(key) as f64 + delta;
        if numerator <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let dest =
            train.n_state(key.dest_x, key.dest_partition) as f64 + delta * choice_outcomes;
        let origin = train.n_origin_choice(key.origin_x, key.origin_partition, key.choice) as f64
            + delta * transition_outcomes;
        transition_part += n_val as f64 * (numerator.ln() - dest.ln() - origin.ln());
    }

    Ok((decision_part + lambda_rel * lambda_adjust_val * transition_part) / (1.0 + lambda_rel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::count_tables;
    use crate::panel::{Observation, Panel};
    use crate::tree::Discretization;

    fn obs(agent: u64, period: u32, x: i64, q: Vec<f64>, d: u16) -> Observation {
        Observation {
            agent_id: agent,
            period,
            x,
            q,
            decision: d,
        }
    }

    fn panel_single_choice() -> Panel {
        let rows = (1..=4).map(|t| obs(1, t, 1, vec![0.0], 0)).collect();
        Panel::from_observations_with_meta(
            rows,
            crate::panel::PanelMeta {
                n_dims: 1,
                n_choices: 2,
                x_min: 1,
                x_max: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn decision_loglik_zero_when_choices_deterministic() {
        let tables = count_tables(&panel_single_choice(), &Discretization::root(1)).unwrap();
        assert_eq!(decision_loglik(&tables), 0.0);
    }

    #[test]
    fn decision_loglik_hand_value() {
        // One cell with N(x,p)=4 split 2/2 across two choices: 4*ln(1/2).
        let rows = vec![
            obs(1, 1, 1, vec![0.0], 0),
            obs(1, 2, 1, vec![0.0], 0),
            obs(1, 3, 1, vec![0.0], 1),
            obs(1, 4, 1, vec![0.0], 1),
        ];
        let panel = Panel::from_observations(rows).unwrap();
        let tables = count_tables(&panel, &Discretization::root(1)).unwrap();
        let expected = 4.0 * 0.5f64.ln();
        assert!((decision_loglik(&tables) - expected).abs() < 1e-12);
        assert!((expected - (-2.772588722239781)).abs() < 1e-12);
    }

    #[test]
    fn transition_loglik_zero_for_deterministic_chain() {
        // Each destination state occupied exactly once and each origin has a
        // single deterministic successor: every term is ln(1).
        let rows = vec![
            obs(1, 1, 1, vec![0.0], 0),
            obs(1, 2, 2, vec![0.0], 0),
            obs(1, 3, 3, vec![0.0], 0),
        ];
        let panel = Panel::from_observations(rows).unwrap();
        let tables = count_tables(&panel, &Discretization::root(1)).unwrap();
        assert_eq!(transition_loglik(&tables), 0.0);
    }

    #[test]
    fn transition_loglik_hand_value() {
        // Single origin (x'=1, choice 0) with 4 outgoing transitions, split
        // equally between two destination states, each also holding exactly
        // 2 observations: 4 * ln(2 / (2*4)) = 4 ln(1/4).
        let rows = vec![
            obs(1, 1, 1, vec![0.0], 0),
            obs(1, 2, 2, vec![0.0], 1),
            obs(2, 1, 1, vec![0.0], 0),
            obs(2, 2, 2, vec![0.0], 1),
            obs(3, 1, 1, vec![0.0], 0),
            obs(3, 2, 3, vec![0.0], 1),
            obs(4, 1, 1, vec![0.0], 0),
            obs(4, 2, 3, vec![0.0], 1),
        ];
        let panel = Panel::from_observations(rows).unwrap();
        let tables = count_tables(&panel, &Discretization::root(1)).unwrap();
        let expected = 4.0 * (0.25f64).ln();
        assert!((transition_loglik(&tables) - expected).abs() < 1e-12);
        assert!((expected - (-5.545177444479562)).abs() < 1e-12);
    }

    #[test]
    fn lambda_adjust_ratio() {
        // Pure-arithmetic cases of the ratio: -100/-400 = 0.25, equal parts 1.
        assert_eq!((-100.0f64 / -400.0).abs(), 0.25);
        assert_eq!((-7.5f64 / -7.5).abs(), 1.0);
        // Degenerate transition part errors: a single-agent chain visiting a
        // fresh state every period has every transition term equal to ln 1.
        let rows = vec![
            obs(1, 1, 1, vec![0.0], 0),
            obs(1, 2, 2, vec![0.0], 1),
            obs(1, 3, 3, vec![0.0], 0),
        ];
        let panel = Panel::from_observations(rows).unwrap();
        let tables = count_tables(&panel, &Discretization::root(1)).unwrap();
        assert_eq!(transition_loglik(&tables), 0.0);
        assert!(lambda_adjust(&tables).is_err());
    }

    #[test]
    fn lambda_adjust_zero_when_choices_deterministic() {
        // Deterministic choices but informative transitions.
        let rows = vec![
            obs(1, 1, 1, vec![0.0], 0),
            obs(1, 2, 1, vec![0.0], 0),
            obs(1, 3, 2, vec![0.0], 0),
            obs(2, 1, 1, vec![0.0], 0),
            obs(2, 2, 2, vec![0.0], 0),
            obs(2, 3, 2, vec![0.0], 0),
        ];
        let panel = Panel::from_observations(rows).unwrap();
        let tables = count_tables(&panel, &Discretization::root(1)).unwrap();
        assert!(transition_loglik(&tables) < 0.0);
        assert_eq!(lambda_adjust(&tables).unwrap(), 0.0);
    }

    #[test]
    fn objective_arithmetic() {
        // combined = -10 + 0.25 * 2 * (-40) = -30, checked through the struct
        // identity on synthetic components.
        let value = ObjectiveValue {
            decision: -10.0,
            transition: -40.0,
            lambda_adjust: 0.25,
            lambda_rel: 2.0,
            combined: -10.0 + 0.25 * 2.0 * -40.0,
        };
        assert_eq!(value.combined, -30.0);
    }

    #[test]
    fn objective_rejects_negative_weights() {
        let tables = count_tables(&panel_single_choice(), &Discretization::root(1)).unwrap();
        assert!(objective(&tables, -1.0, 0.5).is_err());
        assert!(objective(&tables, 1.0, -0.5).is_err());
    }

    #[test]
    fn objective_with_zero_lambda_rel_is_decision_part() {
        let rows = vec![
            obs(1, 1, 1, vec![0.0], 0),
            obs(1, 2, 2, vec![0.0], 1),
            obs(1, 3, 1, vec![0.0], 0),
            obs(2, 1, 1, vec![0.0], 1),
            obs(2, 2, 2, vec![0.0], 0),
        ];
        let panel = Panel::from_observations(rows).unwrap();
        let tables = count_tables(&panel, &Discretization::root(1)).unwrap();
        let value = objective(&tables, 0.0, 0.7).unwrap();
        assert_eq!(value.combined, value.decision);
    }

    fn mixed_panel() -> Panel {
        let rows = vec![
            obs(1, 1, 1, vec![0.2], 0),
            obs(1, 2, 2, vec![0.8], 1),
            obs(1, 3, 1, vec![0.3], 0),
            obs(2, 1, 1, vec![0.7], 1),
            obs(2, 2, 2, vec![0.6], 0),
            obs(2, 3, 1, vec![0.1], 1),
        ];
        Panel::from_observations(rows).unwrap()
    }

    #[test]
    fn self_score_without_smoothing_matches_objective_parts() {
        let panel = mixed_panel();
        let mut tree = Discretization::root(1);
        tree.split_leaf(0, 0, 0.5).unwrap();
        let tables = count_tables(&panel, &tree).unwrap();
        let score0 = validation_score(
            &tables,
            &tables,
            0.0,
            0.3,
            SmoothingConfig { delta: 0.0 },
        )
        .unwrap();
        assert!((score0 - decision_loglik(&tables)).abs() < 1e-12);

        let lr = 1.5;
        let la = 0.3;
        let s = validation_score(&tables, &tables, lr, la, SmoothingConfig { delta: 0.0 }).unwrap();
        let expected =
            (decision_loglik(&tables) + lr * la * transition_loglik(&tables)) / (1.0 + lr);
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn unseen_event_smoothed_vs_sentinel() {
        let train_rows = vec![
            obs(1, 1, 1, vec![0.2], 0),
            obs(1, 2, 1, vec![0.3], 0),
            obs(2, 1, 1, vec![0.1], 0),
            obs(2, 2, 1, vec![0.4], 0),
        ];
        // Validation contains choice 1, never seen in training.
        let val_rows = vec![obs(9, 1, 1, vec![0.2], 1), obs(9, 2, 1, vec![0.3], 0)];
        let meta = crate::panel::PanelMeta {
            n_dims: 1,
            n_choices: 2,
            x_min: 1,
            x_max: 1,
        };
        let train = Panel::from_observations_with_meta(train_rows, meta).unwrap();
        let val = Panel::from_observations_with_meta(val_rows, meta).unwrap();
        let tree = Discretization::root(1);
        let tc = count_tables(&train, &tree).unwrap();
        let vc = count_tables(&val, &tree).unwrap();

        let smoothed =
            validation_score(&tc, &vc, 1.0, 0.5, SmoothingConfig { delta: 1e-5 }).unwrap();
        assert!(smoothed.is_finite());
        let sentinel =
            validation_score(&tc, &vc, 1.0, 0.5, SmoothingConfig { delta: 0.0 }).unwrap();
        assert_eq!(sentinel, f64::NEG_INFINITY);
    }

    #[test]
    fn score_limit_large_lambda_rel() {
        let panel = mixed_panel();
        let tree = Discretization::root(1);
        let tables = count_tables(&panel, &tree).unwrap();
        let la = 0.4;
        let big = 1e12;
        let s = validation_score(&tables, &tables, big, la, SmoothingConfig { delta: 0.0 }).unwrap();
        let transition_term = la * transition_loglik(&tables);
        assert!((s - transition_term).abs() < 1e-9 * (1.0 + transition_term.abs()));
    }
}
