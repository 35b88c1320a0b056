// Scratch probe for calibrating acceptance expectations. Will be replaced by
// the final examples.

use ddcpart::nfxp::{estimate_theta, EstimateOptions, ModelSpec};
use ddcpart::partitioner::{grow, Hyperparameters};
use ddcpart::simulator::{match_partitions, simulate, DgpConfig, QTransition};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    // --- dissimilar/dissimilar/no-transition: biased at 1 partition ---
    for budget in [1u32, 4] {
        let mut coefs = Vec::new();
        for round in 0..5u64 {
            let config = DgpConfig::study1(true, true, QTransition::NoTransition, 400, 100, 1000 + round);
            let panel = simulate(&config).unwrap();
            let hp = Hyperparameters::with_max_partitions(budget);
            let growth = grow(&panel, &hp).unwrap();
            let est = estimate_theta(&panel, &growth.tree, 0.95, ModelSpec::BusLinear, &EstimateOptions::default());
            match est {
                Ok(e) => {
                    coefs.push(e.maintenance_coef().unwrap());
                    if round == 0 {
                        println!(
                            "budget {budget} round {round}: k={} c_m={:.4} repl={:?} ll={:.1} matched={} iters={}",
                            growth.tree.n_partitions(),
                            e.maintenance_coef().unwrap(),
                            e.replacement_utilities().map(|r| r.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()),
                            e.log_likelihood,
                            match_partitions(&config.truth, &growth.tree, &panel).unwrap(),
                            e.iterations,
                        );
                    }
                }
                Err(e) => println!("budget {budget} round {round}: ERROR {e}"),
            }
        }
        let mean: f64 = coefs.iter().sum::<f64>() / coefs.len() as f64;
        println!("no-transition budget {budget}: mean c_m = {mean:.4} over {} rounds [{:?}]", coefs.len(), t0.elapsed());
    }
}
