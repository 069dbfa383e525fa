//! Evaluation of reinforcement-learning controllers over parameterized
//! families of MDPs.
//!
//! A task's context space (pole length, masses, gravity, ...) is enumerated
//! into a family of point MDPs. Each point carries an importance mass, and a
//! method's overall performance is the mass-weighted sum of its normalized
//! per-point scores. When only `N` of the `M` points can be trained, the
//! [`approx`] estimators pick which points to evaluate.
//!
//! Module map:
//!
//! - [`family`]: context spaces, family enumeration, importance distributions.
//! - [`envs`]: cartpole, pendulum and continuous mountain car with context
//!   substituted constants.
//! - [`controllers`]: random search, CEM, tabular Q-learning and fixed baselines.
//! - [`eval`]: per-point evaluation, score matrices, overall performance, caching.
//! - [`approx`]: the M1/M2/M3 estimators and budget sweeps.
//! - [`reporting`]: performance profiles, dominance, rank and cross-task reports.
//! - [`experiment`]: config-driven pipeline behind the `mdpfam` binary.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod controllers;
pub mod envs;
mod error;
pub mod eval;
pub mod experiment;
pub mod family;
pub mod par;
pub mod reporting;
pub mod seed;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Whether lower or higher raw values are better for a task's metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricDirection {
    LowerBetter,
    HigherBetter,
}

impl MetricDirection {
    /// Maps a score onto a higher-is-better scale.
    pub fn utility(self, value: f64) -> f64 {
        match self {
            MetricDirection::HigherBetter => value,
            MetricDirection::LowerBetter => -value,
        }
    }

    /// `true` when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        self.utility(a) > self.utility(b)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricDirection::LowerBetter => "lower_better",
            MetricDirection::HigherBetter => "higher_better",
        }
    }
}
