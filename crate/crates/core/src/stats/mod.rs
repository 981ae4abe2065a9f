//! Permutation tests, Bonferroni correction, point-of-no-return scanning and
//! Kendall rank correlation.

mod kendall;
mod permutation;
mod ponr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kendall::{cross_model_tau_matrix, kendall_tau, kendall_tau_b, TauMatrix};
pub use permutation::{permutation_test, permutation_test_with, PermutationMode, EXACT_LIMIT};
pub use ponr::{point_of_no_return, PonrOutcome, PonrTest, PONR_PERMUTATIONS, TIMING_COMPARISONS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("group {0} is empty")]
    EmptyGroup(&'static str),
    #[error("{labelings} labelings exceed the exact-enumeration limit")]
    TooManyLabelings { labelings: u128 },
    #[error("the inputs have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("fewer than 2 complete pairs remain ({0})")]
    TooFewPairs(usize),
    #[error("one side is constant, tau-b is undefined")]
    Degenerate,
    #[error("no cells for injection fraction {0}")]
    MissingFraction(crate::trial::Fraction),
    #[error("at least two models are required, got {0}")]
    TooFewModels(usize),
    #[error("n_perm must be positive")]
    NoPermutations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactPermutation,
    MonteCarloPermutation,
    KendallExact,
    KendallNormal,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::ExactPermutation => "exact_permutation",
            Method::MonteCarloPermutation => "monte_carlo_permutation",
            Method::KendallExact => "kendall_exact",
            Method::KendallNormal => "kendall_normal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatResult<T> {
    pub statistic: T,
    pub p_value: T,
    pub method: Method,
    pub n_permutations: Option<u64>,
    pub corrected: bool,
    pub correction_factor: Option<u32>,
}

impl<T: crate::Scalar> StatResult<T> {
    /// Bonferroni-adjusted copy: `min(1, p * m)`.
    pub fn bonferroni(&self, m: u32) -> Self {
        let m_t = T::lit(f64::from(m));
        StatResult {
            p_value: (self.p_value * m_t).min(T::one()),
            corrected: true,
            correction_factor: Some(m),
            ..self.clone()
        }
    }
}
