//! Distributed maximization of an unknown global function by kernelized
//! multi-armed bandits.
//!
//! A network of agents shares one action space but each agent can only
//! sample its own private reward function, noisily. The target is the
//! *average* of all local functions, so no agent can optimize alone.
//! Each agent fits a Gaussian-process posterior to its own observations
//! and runs a running-consensus exchange with its neighbors to maintain
//! an estimate of the global posterior mean and deviation; its next action
//! maximizes the upper confidence bound of that estimate. A staged variant
//! delays the estimates used for decisions until they have mixed through
//! the network several times, trading freshness for lower bias.
//!
//! The crate is organized along the pipeline:
//!
//! * [`kernel`] — kernel functions and Gram matrices;
//! * [`gp`] — incremental GP posteriors and information gain;
//! * [`netgraph`] — communication graphs, Metropolis weights, spectral gap;
//! * [`envmodel`] — synthetic environments, rewards, pseudo-regret;
//! * [`agents`] — the bandit policies and their estimate exchanges;
//! * [`simcore`] — deterministic trial and experiment execution;
//! * [`config`] — the experiment document and named presets;
//! * [`seeding`] — labeled RNG substreams behind all randomness.
//!
//! The companion `book/` directory walks through the concepts with
//! runnable examples; the `kermab` binary drives experiments from config
//! files and writes CSV and SVG outputs.
//!
//! # Quick start
//!
//! ```
//! use kermab::config::{preset, Policy};
//! use kermab::simcore::{run_trial, TrialConfig};
//!
//! let mut cfg = preset("paper_small").unwrap();
//! cfg.sim.t_horizon = 50; // keep the example quick
//! let record = run_trial(&TrialConfig::from_experiment(&cfg, 42)).unwrap();
//! assert_eq!(record.policy, Policy::Ma);
//! assert_eq!(record.cum_regret.len(), 50);
//! // Pseudo-regret is nonnegative, so its running sum never decreases.
//! assert!(record.cum_regret.windows(2).all(|w| w[1] >= w[0] - 1e-12));
//! ```

pub mod agents;
pub mod config;
pub mod envmodel;
mod error;
pub mod gp;
pub mod kernel;
pub mod netgraph;
pub mod seeding;
pub mod simcore;

pub use error::{Error, Result};
