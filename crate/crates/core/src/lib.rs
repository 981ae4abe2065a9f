//! Clarification-timing experiment harness.
//!
//! Runs agents through forced-injection and natural-ask protocols, records
//! every trial to a line-delimited archive, and computes pass@k, wasted
//! compute, permutation tests and rank correlations over the results.

pub mod archive;
pub mod gateway;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod trial;

pub use scalar::Scalar;

/// Commitment profile over `f64`.
pub type Profile = sim::CommitmentProfile<f64>;

/// Statistical test result over `f64`.
pub type Stat = stats::StatResult<f64>;
