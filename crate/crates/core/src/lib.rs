//! Robust constrained policy gradients for MDPs with uncertain transitions.
//!
//! The crate covers nominal-model estimation with L1 uncertainty sets,
//! tabular worst-case model selection, a small differentiable MLP, the
//! PG / CPG / RCPG / adversarial RCPG trainers, the benchmark tasks and the
//! perturbation test suites used to compare them.

pub mod config;
pub mod diffnet;
pub mod envs;
pub mod eval;
pub mod error;
pub mod mdp;
pub mod pipeline;
pub mod robustness;
pub mod trainers;

pub use error::{Error, Result};
