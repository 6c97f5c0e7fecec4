//! Active-learning informative path planning for UAV semantic terrain mapping.
//!
//! A simulated UAV flies budgeted missions over a synthetic terrain, labels
//! what it captured with the ground truth, and retrains a Monte-Carlo dropout
//! classifier. Planners pick capture positions from the model's uncertainty
//! as fused into a global map.
//!
//! Module map:
//! - [`terrain`]: ground truth, camera model and grid geometry
//! - [`bayes`]: MC-dropout classifier, training, metrics, checkpoints
//! - [`mapping`]: Kalman-fused semantic map and uncertainty/hit layers
//! - [`planning`]: flight cost, budgets and the four planners
//! - [`cmaes`]: CMA-ES optimiser used to refine planned paths
//! - [`mission`]: the experiment pipeline
//! - [`config`], [`export`], [`cli`]: configuration, file outputs, subcommands

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bayes;
pub mod cli;
pub mod cmaes;
pub mod config;
pub mod error;
pub mod export;
pub mod mapping;
pub mod mission;
pub mod planning;
pub mod seed;
pub mod terrain;

pub use error::{Error, Result};
