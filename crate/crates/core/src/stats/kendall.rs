use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use statrs::function::erf::erfc;

use super::{Method, StatResult, StatsError};
use crate::metrics::CellSummary;
use crate::trial::Condition;
use crate::Scalar;

/// Pair counts behind tau-b.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Counts {
    n: u64,
    /// concordant minus discordant
    s: i64,
    pairs: u64,
    ties_x: u64,
    ties_y: u64,
}

fn cmp<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).expect("NaN pairs are dropped before ranking")
}

/// Runs of equal values in a sorted slice, as run lengths.
fn runs<T: Copy>(xs: &[T], eq: impl Fn(T, T) -> bool) -> Vec<u64> {
    let mut out = Vec::new();
    let mut len = 1u64;
    for w in xs.windows(2) {
        if eq(w[0], w[1]) {
            len += 1;
        } else {
            out.push(len);
            len = 1;
        }
    }
    if !xs.is_empty() {
        out.push(len);
    }
    out
}

fn tied_pairs(runs: &[u64]) -> u64 {
    runs.iter().map(|t| t * (t - 1) / 2).sum()
}

/// Merge sort counting exchanges (discordant pairs among distinct x).
fn sort_count_swaps<T: Scalar>(ys: &mut [T], buf: &mut [T]) -> u64 {
    let n = ys.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut ys[..mid], &mut buf[..mid]);
    swaps += sort_count_swaps(&mut ys[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if cmp(ys[j], ys[i]) == Ordering::Less {
            swaps += (mid - i) as u64;
            buf[k] = ys[j];
            j += 1;
        } else {
            buf[k] = ys[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&ys[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&ys[j..n]);
    ys.copy_from_slice(&buf[..n]);
    swaps
}

/// O(n log n) pair counting (Knight's algorithm).
fn knight<T: Scalar>(pairs: &mut [(T, T)]) -> (Counts, Vec<u64>, Vec<u64>) {
    let n = pairs.len() as u64;
    pairs.sort_by(|a, b| cmp(a.0, b.0).then(cmp(a.1, b.1)));
    let x_runs = runs(pairs, |a, b| a.0 == b.0);
    let joint = tied_pairs(&runs(pairs, |a, b| a.0 == b.0 && a.1 == b.1));
    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = ys.clone();
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let y_runs = runs(&ys, |a, b| a == b);
    let total = n * (n - 1) / 2;
    let ties_x = tied_pairs(&x_runs);
    let ties_y = tied_pairs(&y_runs);
    let s = total as i64 - ties_x as i64 - ties_y as i64 + joint as i64 - 2 * swaps as i64;
    (
        Counts {
            n,
            s,
            pairs: total,
            ties_x,
            ties_y,
        },
        x_runs,
        y_runs,
    )
}

fn complete_pairs<T: Scalar>(x: &[T], y: &[T]) -> Result<Vec<(T, T)>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let pairs: Vec<(T, T)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 2 {
        return Err(StatsError::TooFewPairs(pairs.len()));
    }
    Ok(pairs)
}

fn tau_from<T: Scalar>(c: &Counts) -> Result<T, StatsError> {
    let left = c.pairs - c.ties_x;
    let right = c.pairs - c.ties_y;
    if left == 0 || right == 0 {
        return Err(StatsError::Degenerate);
    }
    let den = (left as f64 * right as f64).sqrt();
    Ok(T::lit(c.s as f64 / den))
}

/// Tau-b alone, over pairs complete on both sides.
pub fn kendall_tau_b<T: Scalar>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    let mut pairs = complete_pairs(x, y)?;
    tau_from(&knight(&mut pairs).0)
}

/// Tau-b with a two-sided p-value: exact over all orderings of y for
/// n <= 10, normal approximation with tie-corrected variance above.
pub fn kendall_tau<T: Scalar>(x: &[T], y: &[T]) -> Result<StatResult<T>, StatsError> {
    let mut pairs = complete_pairs(x, y)?;
    let (counts, x_runs, y_runs) = knight(&mut pairs);
    let tau = tau_from::<T>(&counts)?;
    let (p, method) = if counts.n <= 10 {
        (exact_p(&pairs, counts.s), Method::KendallExact)
    } else {
        (normal_p(&counts, &x_runs, &y_runs), Method::KendallNormal)
    };
    Ok(StatResult {
        statistic: tau,
        p_value: T::lit(p.clamp(f64::MIN_POSITIVE, 1.0)),
        method,
        n_permutations: None,
        corrected: false,
        correction_factor: None,
    })
}

fn normal_p(c: &Counts, x_runs: &[u64], y_runs: &[u64]) -> f64 {
    let n = c.n as f64;
    let sum = |runs: &[u64], f: &dyn Fn(f64) -> f64| runs.iter().map(|&t| f(t as f64)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = sum(x_runs, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum(y_runs, &|u| u * (u - 1.0) * (2.0 * u + 5.0));
    let v1 = sum(x_runs, &|t| t * (t - 1.0)) * sum(y_runs, &|u| u * (u - 1.0));
    let v2 = sum(x_runs, &|t| t * (t - 1.0) * (t - 2.0)) * sum(y_runs, &|u| u * (u - 1.0) * (u - 2.0));
    let var = (v0 - vt - vu) / 18.0 + v1 / (2.0 * n * (n - 1.0)) + v2 / (9.0 * n * (n - 1.0) * (n - 2.0));
    if var <= 0.0 {
        return 1.0;
    }
    let z = c.s.unsigned_abs() as f64 / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2)
}

fn sign<T: Scalar>(a: T, b: T) -> i64 {
    match cmp(a, b) {
        Ordering::Less => -1,
        Ordering::Equal => 0,
        Ordering::Greater => 1,
    }
}

/// Share of the n! reassignments of y to x whose |S| reaches the observed
/// |S|, enumerated with Heap's algorithm and O(n) updates per swap.
fn exact_p<T: Scalar>(pairs: &[(T, T)], observed: i64) -> f64 {
    let n = pairs.len();
    let xs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let sx: Vec<Vec<i64>> = (0..n)
        .map(|i| (0..n).map(|j| sign(xs[i], xs[j])).collect())
        .collect();
    let contribution = |ys: &[T], i: usize| -> i64 {
        (0..n).map(|k| sx[i][k] * sign(ys[i], ys[k])).sum()
    };
    let mut s: i64 = (0..n).map(|i| contribution(&ys, i)).sum::<i64>() / 2;
    let target = observed.abs();
    let mut hits: u64 = u64::from(s.abs() >= target);
    let mut total: u64 = 1;
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            // pairs (i, k) and (j, k) change; the (i, j) pair is counted in both
            let before = contribution(&ys, i) + contribution(&ys, j) - sx[i][j] * sign(ys[i], ys[j]);
            ys.swap(i, j);
            let after = contribution(&ys, i) + contribution(&ys, j) - sx[i][j] * sign(ys[i], ys[j]);
            s += after - before;
            total += 1;
            if s.abs() >= target {
                hits += 1;
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Pairwise tau-b between models over per-(variant, condition) pass@k,
/// restricted to units both models completed.
#[derive(Clone, Debug, PartialEq)]
pub struct TauMatrix {
    pub models: Vec<String>,
    /// `None` where tau-b is undefined for the pair.
    pub entries: Vec<Vec<Option<StatResult<f64>>>>,
    pub shared_units: Vec<Vec<usize>>,
}

pub fn cross_model_tau_matrix(cells: &[CellSummary], models: &[String]) -> Result<TauMatrix, StatsError> {
    if models.len() < 2 {
        return Err(StatsError::TooFewModels(models.len()));
    }
    let by_model: Vec<BTreeMap<(&str, Condition), f64>> = models
        .iter()
        .map(|m| {
            cells
                .iter()
                .filter(|c| &c.model == m)
                .map(|c| ((c.variant_id.as_str(), c.condition), c.pass_at_k))
                .collect()
        })
        .collect();
    let m = models.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let results: Vec<(usize, usize, usize, Option<StatResult<f64>>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y): (Vec<f64>, Vec<f64>) = by_model[i]
                .iter()
                .filter_map(|(k, &a)| by_model[j].get(k).map(|&b| (a, b)))
                .unzip();
            (i, j, x.len(), kendall_tau(&x, &y).ok())
        })
        .collect();
    let mut entries = vec![vec![None; m]; m];
    let mut shared_units = vec![vec![0; m]; m];
    for (i, j, n, r) in results {
        shared_units[i][j] = n;
        shared_units[j][i] = n;
        entries[j][i] = r.clone();
        entries[i][j] = r;
    }
    Ok(TauMatrix {
        models: models.to_vec(),
        entries,
        shared_units,
    })
}
