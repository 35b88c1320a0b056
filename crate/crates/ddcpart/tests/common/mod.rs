//! Shared helpers for the integration suites: random panel generation and the
//! full-recompute objective oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddcpart::counts::count_tables;
use ddcpart::objective;
use ddcpart::panel::{Observation, Panel, PanelMeta};
use ddcpart::tree::Discretization;

/// Shape of a randomly generated test panel.
#[derive(Debug, Clone, Copy)]
pub struct RandomPanelShape {
    pub n_agents: usize,
    pub n_periods: usize,
    pub n_dims: usize,
    pub n_choices: u16,
    pub n_x: i64,
    /// Covariates are integers in `0..q_levels` (ties exercise the midpoint
    /// rule) unless `real_q` is set.
    pub q_levels: i64,
    pub real_q: bool,
}

impl Default for RandomPanelShape {
    fn default() -> Self {
        RandomPanelShape {
            n_agents: 8,
            n_periods: 6,
            n_dims: 3,
            n_choices: 2,
            n_x: 3,
            q_levels: 5,
            real_q: false,
        }
    }
}

/// Random panel with decisions correlated with the first covariate, so splits
/// genuinely change the objective.
pub fn random_panel(seed: u64, shape: RandomPanelShape) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for agent in 1..=shape.n_agents as u64 {
        let mut x = rng.gen_range(1..=shape.n_x);
        for period in 1..=shape.n_periods as u32 {
            let q: Vec<f64> = (0..shape.n_dims)
                .map(|_| {
                    if shape.real_q {
                        rng.gen::<f64>() * shape.q_levels as f64
                    } else {
                        rng.gen_range(0..shape.q_levels) as f64
                    }
                })
                .collect();
            let tilt = q[0] / shape.q_levels as f64;
            let decision = if rng.gen::<f64>() < 0.25 + 0.5 * tilt {
                1.min(shape.n_choices as i64 - 1) as u16
            } else {
                rng.gen_range(0..shape.n_choices)
            };
            rows.push(Observation {
                agent_id: agent,
                period,
                x,
                q,
                decision,
            });
            x = (x + rng.gen_range(0..=1)).min(shape.n_x);
        }
    }
    Panel::from_observations_with_meta(
        rows,
        PanelMeta {
            n_dims: shape.n_dims,
            n_choices: shape.n_choices,
            x_min: 1,
            x_max: shape.n_x,
        },
    )
    .unwrap()
}

/// Full-recompute oracle: objective components of a tree on a panel, computed
/// from scratch through the public counting path.
pub fn objective_parts(panel: &Panel, tree: &Discretization) -> (f64, f64) {
    let tables = count_tables(panel, tree).unwrap();
    (
        objective::decision_loglik(&tables),
        objective::transition_loglik(&tables),
    )
}
