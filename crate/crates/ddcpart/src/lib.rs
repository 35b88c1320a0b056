//! Discretization of high-dimensional nuisance state spaces for dynamic
//! discrete choice models.
//!
//! The workflow has three stages, each usable on its own:
//!
//! 1. [`partitioner`] — recursive partitioning of the covariate space on a
//!    weighted decision + transition log-likelihood objective, with
//!    out-of-sample scoring for hyperparameter selection.
//! 2. [`nfxp`] — nested fixed-point maximum-likelihood estimation of the
//!    structural utility parameters on the discretized space, with a
//!    nonparametric transition estimate.
//! 3. [`simulator`] — bus-engine replacement data-generating processes over a
//!    true discretization, used by the Monte Carlo experiments.
//!
//! [`panel`] holds the data model and counting machinery; [`experiment`] runs
//! config-driven Monte Carlo replications end to end. See the crate examples
//! for runnable walkthroughs of each capability.

pub mod counts;
pub mod error;
pub mod experiment;
pub mod nfxp;
pub mod objective;
pub mod optim;
pub mod panel;
pub mod partitioner;
pub mod simulator;
pub mod tree;

pub use counts::{count_tables, CountTables};
pub use error::{Error, Result};
pub use panel::{load_panel, save_panel, split_train_validation, CsvSchema, Observation, Panel};
pub use partitioner::{discretize, grow, tune, Growth, Hyperparameters};
pub use tree::Discretization;
