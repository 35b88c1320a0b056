//! Property suites for the partitioner: incremental gains against the
//! full-recompute oracle, monotonicity of the objective under splits, and the
//! invariances the splitting rule is designed to have.

mod common;

use common::{objective_parts, random_panel, RandomPanelShape};

use ddcpart::counts::{assignments, count_tables};
use ddcpart::objective;
use ddcpart::panel::{Observation, Panel, PanelMeta};
use ddcpart::partitioner::{
    discretize, enumerate_candidates, evaluate_split, grow, Hyperparameters, SplitCandidate,
    StopReason,
};
use ddcpart::tree::Discretization;

fn base_hp(max_partitions: u32) -> Hyperparameters {
    Hyperparameters {
        min_lift: 0.0,
        ..Hyperparameters::with_max_partitions(max_partitions)
    }
}

/// Oracle for one candidate: F(tree + split) - F(tree), recomputed from
/// scratch on both trees.
fn oracle_gain(
    panel: &Panel,
    tree: &Discretization,
    candidate: &SplitCandidate,
) -> (f64, f64) {
    let (dc0, tr0) = objective_parts(panel, tree);
    let mut split = tree.clone();
    split
        .split_leaf(candidate.partition, candidate.dim, candidate.threshold)
        .unwrap();
    let (dc1, tr1) = objective_parts(panel, &split);
    (dc1 - dc0, tr1 - tr0)
}

#[test]
fn evaluate_split_matches_full_recompute_on_random_panels() {
    let mut checked = 0usize;
    for seed in 0..50 {
        let shape = RandomPanelShape {
            n_agents: 4 + (seed as usize % 5),
            n_periods: 3 + (seed as usize % 4),
            real_q: seed % 3 == 0,
            ..RandomPanelShape::default()
        };
        let panel = random_panel(seed, shape);
        // Random partial tree: apply up to two accepted greedy splits first.
        let growth = grow(&panel, &base_hp(1 + (seed % 3) as u32)).unwrap();
        let tree = growth.tree;
        let counts = count_tables(&panel, &tree).unwrap();
        let lambda_adjust = objective::lambda_adjust(&counts).unwrap_or(0.0);
        let candidates = enumerate_candidates(&tree, &panel, &base_hp(64)).unwrap();
        for candidate in candidates {
            let gain =
                evaluate_split(&panel, &tree, &counts, &candidate, 1.0, lambda_adjust).unwrap();
            let (dc, tr) = oracle_gain(&panel, &tree, &candidate);
            assert!(
                (gain.delta_decision - dc).abs() < 1e-9,
                "seed {seed} {candidate:?}: decision {} vs oracle {dc}",
                gain.delta_decision
            );
            assert!(
                (gain.delta_transition - tr).abs() < 1e-9,
                "seed {seed} {candidate:?}: transition {} vs oracle {tr}",
                gain.delta_transition
            );
            checked += 1;
        }
    }
    assert!(checked > 500, "only {checked} candidates exercised");
}

#[test]
fn grow_steps_match_oracle_and_monotonicity() {
    for seed in 100..130 {
        let shape = RandomPanelShape {
            n_agents: 6,
            n_periods: 5,
            n_dims: 2 + (seed as usize % 3),
            real_q: seed % 2 == 0,
            ..RandomPanelShape::default()
        };
        let panel = random_panel(seed, shape);
        let growth = grow(&panel, &base_hp(6)).unwrap();
        let mut tree = Discretization::root(panel.n_dims());
        for step in &growth.steps {
            // Every accepted split increases both components (monotonicity).
            assert!(step.gain.delta_decision >= -1e-9, "seed {seed}: {step:?}");
            assert!(step.gain.delta_transition >= -1e-9, "seed {seed}: {step:?}");
            // The sweep's incremental gain matches the full recompute.
            let (dc, tr) = oracle_gain(&panel, &tree, &step.candidate);
            assert!(
                (step.gain.delta_decision - dc).abs() < 1e-9
                    && (step.gain.delta_transition - tr).abs() < 1e-9,
                "seed {seed}: sweep gain {:?} vs oracle ({dc}, {tr})",
                step.gain
            );
            tree.split_leaf(
                step.candidate.partition,
                step.candidate.dim,
                step.candidate.threshold,
            )
            .unwrap();
        }
        // k = accepted splits + 1.
        assert_eq!(growth.tree.n_partitions() as usize, growth.steps.len() + 1);
    }
}

#[test]
fn exhaustive_single_splits_never_decrease_components() {
    // Directly checks the monotonicity theorem on every admissible single
    // split of the root, not only the accepted ones.
    for seed in 200..215 {
        let panel = random_panel(seed, RandomPanelShape::default());
        let tree = Discretization::root(panel.n_dims());
        let candidates = enumerate_candidates(&tree, &panel, &base_hp(64)).unwrap();
        for candidate in candidates {
            let (dc, tr) = oracle_gain(&panel, &tree, &candidate);
            assert!(dc >= -1e-9, "seed {seed} {candidate:?}: decision {dc}");
            assert!(tr >= -1e-9, "seed {seed} {candidate:?}: transition {tr}");
        }
    }
}

#[test]
fn midpoint_rule_on_distinct_values() {
    // Leaf values {1,2,4} on dimension 2 -> thresholds {1.5, 3.0}.
    let rows = vec![
        Observation { agent_id: 1, period: 1, x: 1, q: vec![0.0, 0.0, 1.0], decision: 0 },
        Observation { agent_id: 1, period: 2, x: 1, q: vec![0.0, 0.0, 2.0], decision: 1 },
        Observation { agent_id: 1, period: 3, x: 1, q: vec![0.0, 0.0, 4.0], decision: 0 },
    ];
    let panel = Panel::from_observations(rows).unwrap();
    let tree = Discretization::root(3);
    let candidates = enumerate_candidates(&tree, &panel, &base_hp(8)).unwrap();
    let dim2: Vec<f64> = candidates
        .iter()
        .filter(|c| c.dim == 2)
        .map(|c| c.threshold)
        .collect();
    assert_eq!(dim2, vec![1.5, 3.0]);
    // Constant dimensions yield no candidates.
    assert!(candidates.iter().all(|c| c.dim == 2));
}

#[test]
fn min_observations_starves_all_candidates() {
    let panel = random_panel(7, RandomPanelShape::default());
    let hp = Hyperparameters {
        min_observations: panel.n_obs() as u64,
        ..base_hp(8)
    };
    let tree = Discretization::root(panel.n_dims());
    assert!(enumerate_candidates(&tree, &panel, &hp).unwrap().is_empty());
    let growth = grow(&panel, &hp).unwrap();
    assert_eq!(growth.tree.n_partitions(), 1);
    assert_eq!(growth.stop, StopReason::NoCandidates);
}

#[test]
fn max_partitions_one_returns_root() {
    let panel = random_panel(8, RandomPanelShape::default());
    let growth = grow(&panel, &base_hp(1)).unwrap();
    assert_eq!(growth.tree.n_partitions(), 1);
    assert_eq!(growth.stop, StopReason::MaxPartitions);
}

#[test]
fn grow_is_deterministic_across_worker_counts() {
    let panel = random_panel(9, RandomPanelShape {
        n_agents: 20,
        n_periods: 8,
        n_dims: 4,
        ..RandomPanelShape::default()
    });
    let hp = base_hp(6);
    let baseline = grow(&panel, &hp).unwrap().tree.to_text();
    for threads in [1usize, 3] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let text = pool.install(|| grow(&panel, &hp).unwrap().tree.to_text());
        assert_eq!(text, baseline, "tree differs with {threads} threads");
    }
}

#[test]
fn monotone_transform_preserves_membership() {
    for seed in 300..310 {
        let panel = random_panel(
            seed,
            RandomPanelShape {
                n_agents: 12,
                n_periods: 6,
                n_dims: 3,
                ..RandomPanelShape::default()
            },
        );
        let hp = base_hp(5);
        let growth = grow(&panel, &hp).unwrap();

        // Apply a strictly increasing map (cubing; values are nonnegative).
        let mut rows = Vec::new();
        for r in 0..panel.n_obs() {
            let mut o = panel.observation(r);
            o.q = o.q.iter().map(|v| v.powi(3)).collect();
            rows.push(o);
        }
        let transformed =
            Panel::from_observations_with_meta(rows, panel.meta()).unwrap();
        let growth_t = grow(&transformed, &hp).unwrap();

        assert_eq!(
            growth.assignments, growth_t.assignments,
            "membership changed under a monotone transform (seed {seed})"
        );
    }
}

#[test]
fn duplicate_column_tie_breaks_to_lower_dimension() {
    // Two identical informative columns: gains tie exactly, the split must
    // land on dimension 0.
    let mut rows = Vec::new();
    for agent in 1..=10u64 {
        for period in 1..=4u32 {
            let v = ((agent + period as u64) % 5) as f64;
            let decision = u16::from(v >= 2.5);
            rows.push(Observation {
                agent_id: agent,
                period,
                x: 1,
                q: vec![v, v],
                decision,
            });
        }
    }
    let panel = Panel::from_observations_with_meta(
        rows,
        PanelMeta {
            n_dims: 2,
            n_choices: 2,
            x_min: 1,
            x_max: 1,
        },
    )
    .unwrap();
    let growth = grow(&panel, &base_hp(2)).unwrap();
    assert_eq!(growth.steps.len(), 1);
    assert_eq!(growth.steps[0].candidate.dim, 0);
}

#[test]
fn equal_frequency_split_has_zero_gain() {
    // Children with identical per-x choice frequencies and identical incoming
    // and outgoing transition profiles: the log-sum equality case, gain 0.
    // Side sequences are balanced so all four (origin side, dest side) pairs
    // occur equally often and both sides have equal occupancy.
    let side_value = |s: char| if s == 'a' { 0.0 } else { 9.0 };
    let patterns = ["aab", "aba", "baa", "bbb"];
    let mut rows = Vec::new();
    for (agent, pattern) in patterns.iter().enumerate() {
        for (t, side) in pattern.chars().enumerate() {
            rows.push(Observation {
                agent_id: agent as u64 + 1,
                period: t as u32 + 1,
                x: 1,
                q: vec![side_value(side)],
                decision: 0,
            });
        }
    }
    let panel = Panel::from_observations_with_meta(
        rows,
        PanelMeta {
            n_dims: 1,
            n_choices: 2,
            x_min: 1,
            x_max: 1,
        },
    )
    .unwrap();
    let tree = Discretization::root(1);
    let counts = count_tables(&panel, &tree).unwrap();
    let candidate = SplitCandidate {
        partition: 0,
        dim: 0,
        threshold: 4.5,
    };
    let gain = evaluate_split(&panel, &tree, &counts, &candidate, 1.0, 1.0).unwrap();
    assert!(gain.delta_decision.abs() < 1e-12, "{gain:?}");
    assert!(gain.delta_transition.abs() < 1e-12, "{gain:?}");

    // Breaking the balance (an agent that never leaves side b) makes the
    // split informative again.
    let mut rows = Vec::new();
    for (agent, pattern) in ["aab", "aba", "bbb", "bbb"].iter().enumerate() {
        for (t, side) in pattern.chars().enumerate() {
            rows.push(Observation {
                agent_id: agent as u64 + 1,
                period: t as u32 + 1,
                x: 1,
                q: vec![side_value(side)],
                decision: 0,
            });
        }
    }
    let panel = Panel::from_observations_with_meta(
        rows,
        PanelMeta {
            n_dims: 1,
            n_choices: 2,
            x_min: 1,
            x_max: 1,
        },
    )
    .unwrap();
    let counts = count_tables(&panel, &tree).unwrap();
    let gain = evaluate_split(&panel, &tree, &counts, &candidate, 1.0, 1.0).unwrap();
    assert!(gain.delta_transition > 1e-6, "{gain:?}");
}

#[test]
fn perfectly_separating_split_zeroes_decision_loglik() {
    // q < 0.5 always chooses 0, q >= 0.5 always chooses 1; with lambda_rel = 0
    // the gain is exactly -decision_loglik(root).
    let mut rows = Vec::new();
    for agent in 1..=6u64 {
        for period in 1..=4u32 {
            let q = if (agent + period as u64) % 2 == 0 { 0.2 } else { 0.8 };
            rows.push(Observation {
                agent_id: agent,
                period,
                x: 1,
                q: vec![q],
                decision: u16::from(q >= 0.5),
            });
        }
    }
    let panel = Panel::from_observations_with_meta(
        rows,
        PanelMeta {
            n_dims: 1,
            n_choices: 2,
            x_min: 1,
            x_max: 1,
        },
    )
    .unwrap();
    let tree = Discretization::root(1);
    let counts = count_tables(&panel, &tree).unwrap();
    let root_dc = objective::decision_loglik(&counts);
    assert!(root_dc < 0.0);
    let candidate = SplitCandidate {
        partition: 0,
        dim: 0,
        threshold: 0.5,
    };
    let gain = evaluate_split(&panel, &tree, &counts, &candidate, 0.0, 1.0).unwrap();
    assert!((gain.delta_combined - (-root_dc)).abs() < 1e-12);
    assert!((gain.delta_decision - (-root_dc)).abs() < 1e-12);
}

#[test]
fn noise_panel_with_min_lift_stays_root() {
    // Large panel with decisions independent of the covariates: no candidate
    // clears a 1e-3 relative lift over 20 seeds.
    use rand::{Rng, SeedableRng};
    for seed in 0..20u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for agent in 1..=2000u64 {
            for period in 1..=10u32 {
                rows.push(Observation {
                    agent_id: agent,
                    period,
                    x: 1,
                    q: vec![rng.gen_range(0..10) as f64, rng.gen_range(0..10) as f64],
                    decision: rng.gen_range(0..2),
                });
            }
        }
        let panel = Panel::from_observations_with_meta(
            rows,
            PanelMeta {
                n_dims: 2,
                n_choices: 2,
                x_min: 1,
                x_max: 1,
            },
        )
        .unwrap();
        let hp = Hyperparameters {
            min_lift: 1e-3,
            ..Hyperparameters::with_max_partitions(8)
        };
        let growth = grow(&panel, &hp).unwrap();
        assert_eq!(
            growth.tree.n_partitions(),
            1,
            "seed {seed} split on noise: {:?}",
            growth.steps
        );
        assert_eq!(growth.stop, StopReason::MinLift);
    }
}

#[test]
fn counts_are_agent_relabel_invariant_and_refinement_consistent() {
    let panel = random_panel(17, RandomPanelShape::default());
    let mut tree = Discretization::root(panel.n_dims());
    tree.split_leaf(0, 0, 2.5).unwrap();
    let tables = count_tables(&panel, &tree).unwrap();

    // Relabeling agents (a bijection) leaves every table identical.
    let relabeled: Vec<Observation> = (0..panel.n_obs())
        .map(|r| {
            let mut o = panel.observation(r);
            o.agent_id = 1000 - o.agent_id;
            o
        })
        .collect();
    let relabeled = Panel::from_observations_with_meta(relabeled, panel.meta()).unwrap();
    let tables_relabeled = count_tables(&relabeled, &tree).unwrap();
    assert_eq!(tables, tables_relabeled);

    // Refining one leaf: parent counts equal the sum over the two children.
    let mut refined = tree.clone();
    let (left, right) = refined.split_leaf(0, 1, 2.5).unwrap();
    let tables_refined = count_tables(&panel, &refined).unwrap();
    for (&(x, p), &n) in tables.states() {
        let refined_n = if p == 0 {
            tables_refined.n_state(x, left) + tables_refined.n_state(x, right)
        } else {
            tables_refined.n_state(x, p)
        };
        assert_eq!(n, refined_n);
    }
    // Totals conservation.
    assert_eq!(tables.total_decisions, tables_refined.total_decisions);
    assert_eq!(tables.total_transitions, tables_refined.total_transitions);
}

#[test]
fn discretize_returns_tree_only() {
    let panel = random_panel(23, RandomPanelShape::default());
    let hp = base_hp(4);
    let tree = discretize(&panel, &hp).unwrap();
    let growth = grow(&panel, &hp).unwrap();
    assert_eq!(tree, growth.tree);
}

#[test]
fn assignments_match_tree_assign() {
    let panel = random_panel(29, RandomPanelShape::default());
    let growth = grow(&panel, &base_hp(4)).unwrap();
    let fresh = assignments(&panel, &growth.tree).unwrap();
    assert_eq!(fresh, growth.assignments);
}
