//! Command-line front end. All logic lives in the library; this binary parses
//! arguments, wires files together, and maps errors to exit codes:
//! 0 success, 1 usage, 2 validation/config, 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ddcpart::error::Error;
use ddcpart::experiment::{self, ExperimentConfig};
use ddcpart::nfxp::{self, EstimateOptions};
use ddcpart::panel::{self, CsvSchema};
use ddcpart::partitioner;
use ddcpart::simulator;
use ddcpart::tree::Discretization;

#[derive(Parser)]
#[command(
    name = "ddcpart",
    about = "Discretize high-dimensional state spaces for dynamic discrete choice models",
    version
)]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from a configured data-generating process.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grow a discretization on a panel file.
    Discretize {
        #[arg(long)]
        config: PathBuf,
        /// Panel CSV (`agent,period,x,d,q1..qD`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search the transition weight on a held-out validation split.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the train/validation split.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate structural parameters on a panel under a saved discretization.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Discretization file produced by `discretize`/`tune`.
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full Monte Carlo experiment from a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge aggregate tables of several experiment output directories.
    Report {
        /// Experiment output directories.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write the merged table here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Schema(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::InvalidArgument(_)
                | Error::Degenerate(_)
                | Error::DimensionMismatch { .. }
                | Error::Config(_) => 2,
                Error::NoConvergence { .. } | Error::Io(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Simulate { config, out, seed } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                config.replication.base_seed = seed;
            }
            std::fs::create_dir_all(&out)?;
            let dgp = build_single_dgp(&config)?;
            let panel = simulator::simulate(&dgp)?;
            panel::save_panel(&panel, out.join("panel.csv"))?;
            dgp.truth.save(out.join("truth.tree"))?;
            println!(
                "simulated {} buses x {} periods -> {} ({} observations)",
                dgp.n_buses,
                dgp.n_periods,
                out.join("panel.csv").display(),
                panel.n_obs()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Discretize { config, data, out } => {
            let config = ExperimentConfig::load(&config)?;
            let panel = panel::load_panel(&data, &CsvSchema::default())?;
            std::fs::create_dir_all(&out)?;
            let growth = partitioner::grow(&panel, &config.partitioner.hyperparameters())?;
            growth.tree.save(out.join("discretization.tree"))?;
            println!(
                "grew {} partitions in {} splits (stop: {:?})",
                growth.tree.n_partitions(),
                growth.steps.len(),
                growth.stop
            );
            for step in &growth.steps {
                println!(
                    "  split partition {} on dim {} at {:.6}: gain {:.6} (lift {:.3e})",
                    step.candidate.partition,
                    step.candidate.dim,
                    step.candidate.threshold,
                    step.gain.delta_combined,
                    step.lift
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Tune {
            config,
            data,
            out,
            seed,
        } => {
            let config = ExperimentConfig::load(&config)?;
            if config.partitioner.lambda_rel_grid.is_empty() {
                return Err(Error::Config(
                    "tune requires a nonempty partitioner.lambda_rel_grid".into(),
                ));
            }
            let panel = panel::load_panel(&data, &CsvSchema::default())?;
            let split_seed = seed.unwrap_or(config.replication.base_seed);
            let (train, validation) = panel::split_train_validation(
                &panel,
                config.partitioner.validation_fraction,
                split_seed,
            )?;
            let hp = config.partitioner.hyperparameters();
            let grid: Vec<_> = config
                .partitioner
                .lambda_rel_grid
                .iter()
                .map(|&lambda| hp.with_lambda_rel(lambda))
                .collect();
            let outcome = partitioner::tune(&train, &validation, &grid)?;
            std::fs::create_dir_all(&out)?;
            outcome.tree.save(out.join("discretization.tree"))?;
            let mut table = String::from("lambda_rel,score,n_partitions\n");
            for entry in &outcome.report {
                table.push_str(&format!(
                    "{},{},{}\n",
                    entry.hyperparameters.lambda_rel, entry.score, entry.n_partitions
                ));
            }
            std::fs::write(out.join("scores.csv"), &table)?;
            println!("{table}");
            println!(
                "best lambda_rel = {} (score {:.6})",
                outcome.best().hyperparameters.lambda_rel,
                outcome.best().score
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate {
            config,
            data,
            tree,
            out,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let panel = panel::load_panel(&data, &CsvSchema::default())?;
            let tree = Discretization::load(&tree)?;
            let options = EstimateOptions {
                value_tolerance: config.estimator.value_tolerance,
                gradient_tolerance: config.estimator.gradient_tolerance,
                max_iterations: config.estimator.max_iterations,
                ..EstimateOptions::default()
            };
            let estimate = nfxp::estimate_theta(
                &panel,
                &tree,
                config.estimator.beta,
                config.estimator.model,
                &options,
            )?;
            std::fs::create_dir_all(&out)?;
            let report = render_estimate(&estimate);
            std::fs::write(out.join("estimate.txt"), &report)?;
            print!("{report}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment { config, out, seed } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                config.replication.base_seed = seed;
            }
            let outcome = experiment::run_experiment(&config, out.as_deref())?;
            print!("{}", experiment::render_aggregate_table(&outcome.aggregates));
            if outcome.failed_rounds > 0 {
                eprintln!("{} round(s) failed; see rounds.csv", outcome.failed_rounds);
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dirs, out } => {
            let merged = experiment::merge_reports(&dirs)?;
            if let Some(path) = out {
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent)?;
                    }
                }
                std::fs::write(&path, &merged)?;
            }
            print!("{merged}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// The `simulate` subcommand draws one panel, so the experiment config must
/// describe a simulated process.
fn build_single_dgp(config: &ExperimentConfig) -> Result<simulator::DgpConfig, Error> {
    use ddcpart::experiment::{DgpBlock, QTransitionKind};
    use ddcpart::simulator::{DgpConfig, QTransition};
    let seed = config.replication.base_seed;
    match &config.dgp {
        DgpBlock::Study1 {
            dissimilar_costs,
            dissimilar_transitions,
            q_transition,
            n_buses,
            n_periods,
            beta,
            maintenance_coef,
        } => {
            let q_model = match q_transition {
                QTransitionKind::No => QTransition::NoTransition,
                QTransitionKind::Random => QTransition::RandomTransition,
                QTransitionKind::Sparse => QTransition::sparse_study1(),
            };
            let mut dgp = DgpConfig::study1(
                *dissimilar_costs,
                *dissimilar_transitions,
                q_model,
                *n_buses,
                *n_periods,
                seed,
            );
            dgp.beta = *beta;
            dgp.maintenance_coef = *maintenance_coef;
            Ok(dgp)
        }
        DgpBlock::Study2 {
            dissimilar_transitions,
            q_transition,
            n_buses,
            n_periods,
            n_splits,
            relevant_dims,
            total_dims,
            beta,
            maintenance_coef,
        } => {
            let truth = simulator::random_discretization(
                experiment::derive_seed(seed, 0, 2),
                *n_splits,
                *relevant_dims,
                *total_dims,
                *dissimilar_transitions,
            )?;
            let q_model = match q_transition {
                QTransitionKind::No => QTransition::NoTransition,
                QTransitionKind::Random => QTransition::RandomTransition,
                QTransitionKind::Sparse => QTransition::sparse_study2(),
            };
            let mut dgp = DgpConfig::study2(truth, q_model, *n_buses, *n_periods, seed);
            dgp.beta = *beta;
            dgp.maintenance_coef = *maintenance_coef;
            Ok(dgp)
        }
        DgpBlock::Csv { .. } => Err(Error::Config(
            "simulate requires a study1 or study2 dgp block".into(),
        )),
    }
}

fn render_estimate(estimate: &nfxp::ThetaEstimate) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "log-likelihood (decision):   {:.6}", estimate.log_likelihood).unwrap();
    writeln!(
        out,
        "log-likelihood (transition): {:.6}",
        estimate.transition_log_likelihood
    )
    .unwrap();
    writeln!(out, "gradient norm: {:.3e}", estimate.gradient_norm).unwrap();
    writeln!(out, "outer iterations: {}", estimate.iterations).unwrap();
    match (&estimate.model, &estimate.standard_errors) {
        (
            nfxp::UtilityModel::BusLinear {
                maintenance_coef,
                replacement_utility,
            },
            se,
        ) => {
            let se_of = |i: usize| -> String {
                se.as_ref()
                    .and_then(|s| s.get(i))
                    .map(|v| format!(" (se {v:.4})"))
                    .unwrap_or_default()
            };
            writeln!(out, "maintenance_coef: {maintenance_coef:.6}{}", se_of(0)).unwrap();
            for (p, value) in replacement_utility.iter().enumerate() {
                writeln!(
                    out,
                    "replacement_utility[{p}]: {value:.6}{}",
                    se_of(1 + p)
                )
                .unwrap();
            }
        }
        (nfxp::UtilityModel::Nonparametric { utilities }, _) => {
            writeln!(out, "nonparametric utilities: {} values", utilities.len()).unwrap();
        }
    }
    if estimate.completion.fallback_rows > 0 {
        writeln!(
            out,
            "transition rows completed by the mileage rule: {}",
            estimate.completion.fallback_rows
        )
        .unwrap();
    }
    if !estimate.completion.unvisited_states.is_empty() {
        writeln!(
            out,
            "states never visited in the data: {:?}",
            estimate.completion.unvisited_states
        )
        .unwrap();
    }
    out
}
