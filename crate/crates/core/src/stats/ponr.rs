use std::collections::BTreeMap;

use super::{permutation_test, StatResult, StatsError};
use crate::trial::Fraction;
use crate::Scalar;

pub const PONR_PERMUTATIONS: u64 = 10_000;
pub const TIMING_COMPARISONS: u32 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct PonrTest<T> {
    pub fraction: Fraction,
    pub raw: StatResult<T>,
    pub adjusted: StatResult<T>,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PonrOutcome<T> {
    /// Latest fraction significantly above no-clarification, if any.
    pub point: Option<Fraction>,
    pub tests: Vec<PonrTest<T>>,
}

/// Tests every injection fraction against no-clarification cells with a
/// one-sided permutation test at `alpha / 5`.
pub fn point_of_no_return<T: Scalar>(
    injection_cells: &BTreeMap<Fraction, Vec<T>>,
    nc_cells: &[T],
    alpha: T,
    seed: u64,
) -> Result<PonrOutcome<T>, StatsError> {
    let threshold = alpha / T::lit(f64::from(TIMING_COMPARISONS));
    let mut tests = Vec::with_capacity(Fraction::ALL.len());
    for f in Fraction::ALL {
        let cells = injection_cells
            .get(&f)
            .filter(|c| !c.is_empty())
            .ok_or(StatsError::MissingFraction(f))?;
        let raw = permutation_test(cells, nc_cells, PONR_PERMUTATIONS, seed ^ u64::from(f.tenths()))?;
        let significant = raw.p_value < threshold;
        tests.push(PonrTest {
            fraction: f,
            adjusted: raw.bonferroni(TIMING_COMPARISONS),
            raw,
            significant,
        });
    }
    let point = tests.iter().rev().find(|t| t.significant).map(|t| t.fraction);
    Ok(PonrOutcome { point, tests })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(mean: f64, n: usize) -> Vec<f64> {
        // mean +/- 0.05, alternating
        (0..n).map(|i| mean + if i % 2 == 0 { 0.05 } else { -0.05 }).collect()
    }

    fn fixture(separated: &[Fraction]) -> BTreeMap<Fraction, Vec<f64>> {
        Fraction::ALL
            .into_iter()
            .map(|f| (f, cells(if separated.contains(&f) { 0.8 } else { 0.3 }, 20)))
            .collect()
    }

    #[test]
    fn early_separation_gives_thirty_percent() {
        let out = point_of_no_return(&fixture(&[Fraction::P10, Fraction::P30]), &cells(0.3, 20), 0.05, 0).unwrap();
        assert_eq!(out.point, Some(Fraction::P30));
        for t in &out.tests {
            assert_eq!(t.significant, t.raw.p_value < 0.01);
            assert!(t.adjusted.corrected);
            assert_eq!(t.adjusted.correction_factor, Some(5));
        }
    }

    #[test]
    fn no_separation_is_absent() {
        let out = point_of_no_return(&fixture(&[]), &cells(0.3, 20), 0.05, 0).unwrap();
        assert_eq!(out.point, None);
    }

    #[test]
    fn full_separation_gives_ninety() {
        let out = point_of_no_return(&fixture(&Fraction::ALL), &cells(0.3, 20), 0.05, 0).unwrap();
        assert_eq!(out.point, Some(Fraction::P90));
    }

    #[test]
    fn missing_fraction_is_error() {
        let mut f = fixture(&[]);
        f.remove(&Fraction::P70);
        assert_eq!(
            point_of_no_return(&f, &cells(0.3, 20), 0.05, 0),
            Err(StatsError::MissingFraction(Fraction::P70))
        );
    }
}
