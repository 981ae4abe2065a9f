//! Per-trial and per-cell metrics: pass@k, wasted compute and ask timing.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::trial::{Action, Condition, Trial, TrialStatus};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("k = {k} must lie in 1..={n}")]
    InvalidK { n: u64, k: u64 },
    #[error("{c} successes out of {n} trials")]
    InvalidSuccesses { n: u64, c: u64 },
    #[error("wasted compute is defined only for injection trials, got {0}")]
    NotInjection(Condition),
}

/// `1 - C(n-c, k) / C(n, k)` in exact rational arithmetic.
pub fn pass_at_k_exact(n: u64, c: u64, k: u64) -> Result<BigRational, MetricsError> {
    if k == 0 || k > n {
        return Err(MetricsError::InvalidK { n, k });
    }
    if c > n {
        return Err(MetricsError::InvalidSuccesses { n, c });
    }
    if n - c < k {
        return Ok(BigRational::one());
    }
    // C(n-c, k) / C(n, k) = prod_{i<k} (n-c-i) / (n-i)
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= n - c - i;
        den *= n - i;
    }
    Ok(BigRational::one() - BigRational::new(num, den))
}

pub fn pass_at_k<T: Scalar>(n: u64, c: u64, k: u64) -> Result<T, MetricsError> {
    let exact = pass_at_k_exact(n, c, k)?;
    Ok(T::lit(exact.to_f64().unwrap_or(f64::NAN)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub variant_id: String,
    pub model: String,
    pub condition: Condition,
    pub n_trials: u64,
    pub n_success: u64,
    /// The k actually used, `min(k, n_trials)`.
    pub k: u64,
    pub pass_at_k: f64,
}

/// One summary per (variant, model, condition) over graded trials, in order
/// of first appearance. Cells smaller than `k` use `k = n_trials`.
pub fn cell_summaries(trials: &[Trial], k: u64) -> Vec<CellSummary> {
    let mut index: HashMap<(&str, &str, Condition), usize> = HashMap::new();
    let mut counts: Vec<(&Trial, u64, u64)> = Vec::new();
    for t in trials.iter().filter(|t| t.status.is_graded()) {
        let key = (t.variant_id.as_str(), t.model.as_str(), t.condition);
        let slot = *index.entry(key).or_insert_with(|| {
            counts.push((t, 0, 0));
            counts.len() - 1
        });
        counts[slot].1 += 1;
        counts[slot].2 += u64::from(t.task_success);
    }
    counts
        .into_iter()
        .map(|(t, n, c)| {
            let k = k.min(n).max(1);
            CellSummary {
                variant_id: t.variant_id.clone(),
                model: t.model.clone(),
                condition: t.condition,
                n_trials: n,
                n_success: c,
                k,
                pass_at_k: pass_at_k(n, c, k).expect("k clamped to the cell size"),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub mean: f64,
    pub n_units: usize,
}

/// Mean pass@k per group, each cell weighted equally. Cells for which `key`
/// returns `None` are left out; groups with no cells never appear.
pub fn group_mean<K, F>(cells: &[CellSummary], key: F) -> BTreeMap<K, GroupMean>
where
    K: Ord,
    F: Fn(&CellSummary) -> Option<K>,
{
    let mut sums: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for cell in cells {
        if let Some(k) = key(cell) {
            let e = sums.entry(k).or_insert((0.0, 0));
            e.0 += cell.pass_at_k;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (sum, n))| {
            (
                k,
                GroupMean {
                    mean: sum / n as f64,
                    n_units: n,
                },
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WasteMode {
    Fraction,
    Absolute,
}

/// Decides whether a trial action reproduces an oracle action. Matching is
/// greedy, so the relation should be an equivalence for multiset semantics.
pub trait ActionMatcher {
    fn matches(&self, action: &Action, oracle: &Action) -> bool;
}

/// Equal names and equal argument maps after trimming, collapsing
/// whitespace and lowercasing every string value.
#[derive(Clone, Copy, Debug, Default)]
pub struct NormalizedMatcher;

fn normalize_value(v: &Value) -> Value {
    match v {
        Value::String(s) => Value::String(
            s.split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase(),
        ),
        Value::Array(a) => Value::Array(a.iter().map(normalize_value).collect()),
        Value::Object(o) => Value::Object(
            o.iter()
                .map(|(k, v)| (k.clone(), normalize_value(v)))
                .collect(),
        ),
        other => other.clone(),
    }
}

impl ActionMatcher for NormalizedMatcher {
    fn matches(&self, action: &Action, oracle: &Action) -> bool {
        action.name == oracle.name
            && action.parameters.len() == oracle.parameters.len()
            && action.parameters.iter().all(|(k, v)| {
                oracle
                    .parameters
                    .get(k)
                    .is_some_and(|o| normalize_value(v) == normalize_value(o))
            })
    }
}

pub fn wasted_compute(
    trial: &Trial,
    oracle_trace: &[Action],
    mode: WasteMode,
) -> Result<f64, MetricsError> {
    wasted_compute_with(trial, oracle_trace, mode, &NormalizedMatcher)
}

/// Pre-injection actions with no counterpart in the oracle trace, each
/// oracle action consumed at most once.
pub fn wasted_compute_with(
    trial: &Trial,
    oracle_trace: &[Action],
    mode: WasteMode,
    matcher: &dyn ActionMatcher,
) -> Result<f64, MetricsError> {
    if !trial.condition.is_injection() {
        return Err(MetricsError::NotInjection(trial.condition));
    }
    let pre = trial.pre_injection();
    let mut used = vec![false; oracle_trace.len()];
    let mut unmatched = 0u32;
    for action in pre {
        let hit = oracle_trace
            .iter()
            .enumerate()
            .find(|(i, o)| !used[*i] && matcher.matches(action, o));
        match hit {
            Some((i, _)) => used[i] = true,
            None => unmatched += 1,
        }
    }
    Ok(match mode {
        WasteMode::Absolute => f64::from(unmatched),
        WasteMode::Fraction if pre.is_empty() => 0.0,
        WasteMode::Fraction => f64::from(unmatched) / pre.len() as f64,
    })
}

/// The completed oracle trial of median length (lower median, ties broken
/// by seed) among `trials`.
pub fn select_oracle_trace<'a, I>(trials: I) -> Option<&'a Trial>
where
    I: IntoIterator<Item = &'a Trial>,
{
    let mut oracle: Vec<&Trial> = trials
        .into_iter()
        .filter(|t| t.condition == Condition::Oracle && t.status == TrialStatus::Completed)
        .collect();
    if oracle.is_empty() {
        return None;
    }
    oracle.sort_by_key(|t| (t.total_actions, t.seed));
    Some(oracle[(oracle.len() - 1) / 2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AskSummary {
    pub model: String,
    pub sessions: usize,
    pub ask_rate: f64,
    pub total_calls: usize,
    pub mean_first_timing: Option<f64>,
    pub median_first_timing: Option<f64>,
    pub calls_per_asking_session: f64,
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

pub fn ask_stats(model: &str, sessions: &[Trial]) -> AskSummary {
    let mut timings: Vec<f64> = sessions.iter().filter_map(Trial::first_ask_timing).collect();
    let asking = sessions.iter().filter(|t| !t.ask_events.is_empty()).count();
    let total_calls: usize = sessions.iter().map(|t| t.ask_events.len()).sum();
    timings.sort_by(f64::total_cmp);
    let mean = (!timings.is_empty()).then(|| timings.iter().sum::<f64>() / timings.len() as f64);
    AskSummary {
        model: model.to_string(),
        sessions: sessions.len(),
        ask_rate: if sessions.is_empty() {
            0.0
        } else {
            asking as f64 / sessions.len() as f64
        },
        total_calls,
        mean_first_timing: mean,
        median_first_timing: median(&timings),
        calls_per_asking_session: if asking == 0 {
            0.0
        } else {
            total_calls as f64 / asking as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::fixtures::{action, trial};
    use crate::trial::{AskEvent, Fraction};
    use proptest::prelude::*;

    fn enumerate(n: u64, c: u64, k: u64) -> BigRational {
        // successes occupy the low c positions
        let mut hit = 0i64;
        let mut total = 0i64;
        for mask in 0u32..(1 << n) {
            if u64::from(mask.count_ones()) != k {
                continue;
            }
            total += 1;
            if mask & ((1u32 << c) - 1) != 0 {
                hit += 1;
            }
        }
        BigRational::new(hit.into(), total.into())
    }

    #[test]
    fn spot_values() {
        assert_eq!(pass_at_k::<f64>(3, 0, 3).unwrap(), 0.0);
        assert_eq!(pass_at_k::<f64>(3, 1, 3).unwrap(), 1.0);
        assert_eq!(pass_at_k::<f64>(4, 1, 3).unwrap(), 0.75);
        assert_eq!(pass_at_k::<f32>(4, 1, 3).unwrap(), 0.75);
        assert_eq!(
            pass_at_k_exact(3, 1, 4),
            Err(MetricsError::InvalidK { n: 3, k: 4 })
        );
        assert!(pass_at_k_exact(3, 4, 1).is_err());
    }

    #[test]
    fn matches_enumeration_up_to_six() {
        for n in 1..=6 {
            for c in 0..=n {
                for k in 1..=n {
                    assert_eq!(pass_at_k_exact(n, c, k).unwrap(), enumerate(n, c, k), "{n} {c} {k}");
                }
            }
        }
    }

    #[test]
    fn large_n_does_not_overflow() {
        let p = pass_at_k::<f64>(10_000, 1, 3).unwrap();
        assert!((p - 0.0003).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn monotone(n in 1u64..60, c in 0u64..60, k in 1u64..60) {
            prop_assume!(c <= n && k <= n);
            let p = pass_at_k_exact(n, c, k).unwrap();
            if c < n {
                prop_assert!(pass_at_k_exact(n, c + 1, k).unwrap() >= p);
            }
            if k < n {
                prop_assert!(pass_at_k_exact(n, c, k + 1).unwrap() >= p);
            }
        }
    }

    fn graded(variant: &str, condition: Condition, seed: u64, success: bool) -> Trial {
        let mut t = trial(variant, condition, seed, 3);
        t.task_success = success;
        t
    }

    #[test]
    fn twenty_one_trials_make_seven_cells() {
        let trials: Vec<Trial> = Condition::ALL
            .iter()
            .flat_map(|&c| (0..3).map(move |s| graded("v", c, s, s == 0)))
            .collect();
        let cells = cell_summaries(&trials, 3);
        assert_eq!(cells.len(), 7);
        assert!(cells.iter().all(|c| c.n_trials == 3 && c.n_success == 1 && c.pass_at_k == 1.0));
    }

    #[test]
    fn ungraded_trials_are_excluded() {
        let mut trials = vec![graded("v", Condition::Oracle, 0, true), graded("v", Condition::Oracle, 1, false)];
        let mut bad = graded("v", Condition::Oracle, 2, true);
        bad.status = TrialStatus::Ungraded;
        trials.push(bad);
        let cells = cell_summaries(&trials, 3);
        assert_eq!(cells[0].n_trials, 2);
        assert_eq!(cells[0].k, 2);
        assert_eq!(cells[0].pass_at_k, 1.0);
    }

    #[test]
    fn group_mean_weights_cells_equally() {
        let trials = vec![
            graded("a", Condition::Oracle, 0, true),
            graded("b", Condition::Oracle, 0, false),
            graded("b", Condition::Oracle, 1, false),
        ];
        let cells = cell_summaries(&trials, 3);
        let means = group_mean(&cells, |c| Some(c.condition));
        assert_eq!(
            means[&Condition::Oracle],
            GroupMean {
                mean: 0.5,
                n_units: 2
            }
        );
        let none = group_mean(&cells, |c| c.condition.is_injection().then_some(()));
        assert!(none.is_empty());
    }

    fn injection_trial(names: &[&str]) -> Trial {
        let mut t = trial("v", Condition::Injection(Fraction::P50), 0, names.len() as u32 + 1);
        for (a, name) in t.actions.iter_mut().zip(names) {
            a.name = name.to_string();
            a.is_pre_injection = true;
        }
        t.pre_injection_actions = names.len() as u32;
        t.post_injection_actions = 1;
        t.injection_point = Some(names.len() as u32);
        t.actions.last_mut().unwrap().is_pre_injection = false;
        t.validate().unwrap();
        t
    }

    fn trace(n: u32) -> Vec<Action> {
        (1..=n).map(|i| action(i, "explore", false)).collect()
    }

    #[test]
    fn wasted_fixtures() {
        let t = injection_trial(&["explore"; 5]);
        assert_eq!(wasted_compute(&t, &trace(5), WasteMode::Fraction).unwrap(), 0.0);
        let t = injection_trial(&["explore", "x", "explore", "y", "explore"]);
        assert_eq!(wasted_compute(&t, &trace(5), WasteMode::Fraction).unwrap(), 0.4);
        assert_eq!(wasted_compute(&t, &trace(5), WasteMode::Absolute).unwrap(), 2.0);
        let t = injection_trial(&["a", "b", "c"]);
        assert_eq!(wasted_compute(&t, &trace(5), WasteMode::Fraction).unwrap(), 1.0);
        let nc = trial("v", Condition::NoClarification, 0, 3);
        assert!(matches!(
            wasted_compute(&nc, &trace(3), WasteMode::Fraction),
            Err(MetricsError::NotInjection(_))
        ));
    }

    #[test]
    fn oracle_actions_are_consumed_once() {
        let mut t = injection_trial(&["explore", "explore"]);
        for a in &mut t.actions {
            a.parameters.insert("step".into(), Value::from(1));
        }
        let oracle = trace(3);
        assert_eq!(wasted_compute(&t, &oracle, WasteMode::Absolute).unwrap(), 1.0);
    }

    #[test]
    fn string_arguments_are_normalized() {
        let mut t = injection_trial(&["search"]);
        t.actions[0].parameters = serde_json::from_str(r#"{"q":"  Q3   Report "}"#).unwrap();
        let mut o = action(1, "search", false);
        o.parameters = serde_json::from_str(r#"{"q":"q3 report"}"#).unwrap();
        assert_eq!(wasted_compute(&t, &[o], WasteMode::Fraction).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn waste_invariant_under_oracle_permutation(
            names in proptest::collection::vec(0u8..4, 1..8),
            oracle in proptest::collection::vec(0u8..4, 0..8),
            shuffle in any::<u64>(),
        ) {
            let named: Vec<String> = names.iter().map(|n| format!("t{n}")).collect();
            let refs: Vec<&str> = named.iter().map(String::as_str).collect();
            let mut t = injection_trial(&refs);
            for a in &mut t.actions { a.parameters.clear(); }
            let mut trace: Vec<Action> = oracle.iter().enumerate()
                .map(|(i, n)| { let mut a = action(i as u32 + 1, &format!("t{n}"), false); a.parameters.clear(); a })
                .collect();
            let before = wasted_compute(&t, &trace, WasteMode::Absolute).unwrap();
            let len = trace.len().max(1);
            trace.rotate_left((shuffle as usize) % len);
            trace.reverse();
            prop_assert_eq!(before, wasted_compute(&t, &trace, WasteMode::Absolute).unwrap());
        }
    }

    #[test]
    fn oracle_trace_is_median_length() {
        let ts = vec![
            trial("v", Condition::Oracle, 0, 9),
            trial("v", Condition::Oracle, 1, 5),
            trial("v", Condition::Oracle, 2, 7),
            trial("v", Condition::NoClarification, 0, 6),
        ];
        assert_eq!(select_oracle_trace(&ts).unwrap().seed, 2);
        assert_eq!(select_oracle_trace(&ts[..2]).unwrap().seed, 1);
        assert!(select_oracle_trace(&ts[3..]).is_none());
    }

    fn session(ask_at: Option<u32>, total: u32) -> Trial {
        let mut t = trial("v", Condition::NoClarification, 0, total);
        t.protocol = crate::trial::Protocol::Natural;
        if let Some(i) = ask_at {
            t.ask_events.push(AskEvent {
                action_index: i,
                question: "?".into(),
            });
        }
        t
    }

    #[test]
    fn ask_summaries() {
        let none: Vec<Trial> = (0..100).map(|_| session(None, 10)).collect();
        let s = ask_stats("m", &none);
        assert_eq!(s.ask_rate, 0.0);
        assert_eq!(s.mean_first_timing, None);
        assert_eq!(s.median_first_timing, None);

        let mut four: Vec<Trial> = (0..3).map(|_| session(None, 10)).collect();
        four.push(session(Some(5), 10));
        let s = ask_stats("m", &four);
        assert_eq!(s.ask_rate, 0.25);
        assert_eq!(s.mean_first_timing, Some(0.5));
        assert_eq!(s.total_calls, 1);
        assert_eq!(s.calls_per_asking_session, 1.0);
    }
}
