use rand::Rng;

use super::{Method, StatResult, StatsError};
use crate::rng::StreamKey;
use crate::Scalar;

/// Largest labeling count enumerated when exact mode is requested
/// explicitly.
pub const EXACT_LIMIT: u128 = 50_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PermutationMode {
    /// Exact when `C(na + nb, na) <= n_perm`, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(u128::from(n - i)) {
            Some(v) => v / u128::from(i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |s, &x| s + x) / T::from_count(xs.len())
}

/// One-sided test of `mean(a) > mean(b)` on the mean-difference statistic.
pub fn permutation_test<T: Scalar>(
    a: &[T],
    b: &[T],
    n_perm: u64,
    seed: u64,
) -> Result<StatResult<T>, StatsError> {
    permutation_test_with(a, b, n_perm, seed, PermutationMode::Auto)
}

/// Exact mode returns `#{labelings >= observed} / C(na + nb, na)`; Monte
/// Carlo mode returns `(1 + #{draws >= observed}) / (1 + n_perm)`.
pub fn permutation_test_with<T: Scalar>(
    a: &[T],
    b: &[T],
    n_perm: u64,
    seed: u64,
    mode: PermutationMode,
) -> Result<StatResult<T>, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptyGroup("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptyGroup("b"));
    }
    let pooled: Vec<T> = a.iter().chain(b).copied().collect();
    let labelings = binomial(pooled.len() as u64, a.len() as u64);
    let exact = match mode {
        PermutationMode::Auto => labelings <= u128::from(n_perm),
        PermutationMode::Exact => true,
        PermutationMode::MonteCarlo => false,
    };
    if !exact && n_perm == 0 {
        return Err(StatsError::NoPermutations);
    }
    if exact && labelings > EXACT_LIMIT {
        return Err(StatsError::TooManyLabelings { labelings });
    }

    // With the pooled total fixed, mean(a') - mean(b') is increasing in
    // sum(a'), so labelings are compared on that sum.
    let observed: T = a.iter().fold(T::zero(), |s, &x| s + x);
    let scale = pooled.iter().fold(T::one(), |m, &x| m.max(x.abs()));
    let tol = T::epsilon() * T::from_count(pooled.len() * 4) * scale;
    let threshold = observed - tol;
    let statistic = mean(a) - mean(b);

    if exact {
        let hits = count_exact(&pooled, a.len(), threshold);
        return Ok(StatResult {
            statistic,
            p_value: T::lit(hits as f64 / labelings as f64),
            method: Method::ExactPermutation,
            n_permutations: Some(labelings as u64),
            corrected: false,
            correction_factor: None,
        });
    }

    let mut rng = StreamKey::new("permutation-test").with_u64(seed).stream();
    let mut work = pooled.clone();
    let na = a.len();
    let mut hits: u64 = 0;
    for _ in 0..n_perm {
        // partial Fisher-Yates: the first na slots are a uniform subset
        for i in 0..na {
            let j = rng.random_range(i..work.len());
            work.swap(i, j);
        }
        let s = work[..na].iter().fold(T::zero(), |s, &x| s + x);
        if s >= threshold {
            hits += 1;
        }
    }
    Ok(StatResult {
        statistic,
        p_value: T::lit((1 + hits) as f64 / (1 + n_perm) as f64),
        method: Method::MonteCarloPermutation,
        n_permutations: Some(n_perm),
        corrected: false,
        correction_factor: None,
    })
}

fn count_exact<T: Scalar>(pooled: &[T], k: usize, threshold: T) -> u128 {
    let n = pooled.len();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut hits = 0u128;
    loop {
        let s = idx.iter().fold(T::zero(), |s, &i| s + pooled[i]);
        if s >= threshold {
            hits += 1;
        }
        // next combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return hits;
        };
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}
