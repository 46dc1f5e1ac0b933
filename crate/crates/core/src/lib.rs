//! Observability-driven partitioning of interconnected discrete-time LTI systems and
//! sensor placement over the resulting subsystems.
//!
//! Every set function in this crate is built from per-output contribution Gramians
//! ([`sysmodel::ContributionGramians`]): the observability Gramian of any sensor subset is
//! the sum of the contributions of its members, so marginal gains reduce to one matrix sum
//! and one metric evaluation. On top of that the crate provides partition matroids, lazy
//! and continuous greedy maximizers with pipage/randomized rounding, the partitioning and
//! placement problems, graph baselines (modularity, spectral clustering), a Kalman-filter
//! scoring harness, and brute-force oracles for small instances.

pub mod error;
pub mod estimator;
pub mod graphkit;
pub mod matroids;
pub mod maximize;
pub mod measures;
pub mod oracle;
pub mod partition;
pub mod placement;
pub mod seed;
pub mod synth;
pub mod sysmodel;

pub use error::{Error, Result};
