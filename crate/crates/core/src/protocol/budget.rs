use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::trial::{Condition, Fraction};

/// Oracle-calibrated action budget for one (model, variant) pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub model: String,
    pub variant_id: String,
    pub value: u32,
}

/// Mean oracle trajectory length rounded to the nearest integer, halves up.
pub fn calibrate_budget(oracle_lengths: &[u32]) -> Result<u32, ProtocolError> {
    if oracle_lengths.is_empty() {
        return Err(ProtocolError::NoOracleLengths);
    }
    let n = oracle_lengths.len() as u64;
    let sum: u64 = oracle_lengths.iter().map(|&l| u64::from(l)).sum();
    // floor(sum / n + 1/2) without leaving integers
    let rounded = (2 * sum + n) / (2 * n);
    Ok(u32::try_from(rounded).unwrap_or(u32::MAX).max(1))
}

/// `max(1, floor(budget * fraction))` for a fraction in the injection set.
pub fn injection_action(budget: u32, fraction: f64) -> Result<u32, ProtocolError> {
    let f = Fraction::from_value(fraction).ok_or(ProtocolError::UnknownFraction(fraction))?;
    injection_action_at(budget, f)
}

pub fn injection_action_at(budget: u32, fraction: Fraction) -> Result<u32, ProtocolError> {
    if budget == 0 {
        return Err(ProtocolError::ZeroBudget);
    }
    let scaled = u64::from(budget) * u64::from(fraction.tenths()) / 10;
    Ok((scaled as u32).max(1))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub condition: Condition,
    pub budget: Budget,
    pub inject_action: u32,
}

impl InjectionPlan {
    pub fn new(condition: Condition, budget: Budget) -> Result<Self, ProtocolError> {
        let fraction = condition
            .fraction()
            .ok_or(ProtocolError::NotInjection(condition))?;
        let inject_action = injection_action_at(budget.value, fraction)?;
        Ok(Self {
            condition,
            budget,
            inject_action,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_budget(&[7, 7, 7]).unwrap(), 7);
        assert_eq!(calibrate_budget(&[6, 7, 9]).unwrap(), 7);
        assert_eq!(calibrate_budget(&[6, 7]).unwrap(), 7);
        assert_eq!(calibrate_budget(&[1, 2]).unwrap(), 2);
        assert_eq!(calibrate_budget(&[0, 0, 0]).unwrap(), 1);
        assert!(matches!(calibrate_budget(&[]), Err(ProtocolError::NoOracleLengths)));
    }

    #[test]
    fn injection_examples() {
        assert_eq!(injection_action(20, 0.1).unwrap(), 2);
        assert_eq!(injection_action(1, 0.9).unwrap(), 1);
        assert_eq!(injection_action(49, 0.7).unwrap(), 34);
        assert_eq!(injection_action(7, 0.1).unwrap(), 1);
        assert_eq!(injection_action(6, 0.1).unwrap(), 1);
        assert!(matches!(injection_action(20, 0.2), Err(ProtocolError::UnknownFraction(_))));
        assert!(matches!(injection_action(0, 0.5), Err(ProtocolError::ZeroBudget)));
    }

    #[test]
    fn plan_requires_injection_condition() {
        let budget = Budget {
            model: "m".into(),
            variant_id: "v".into(),
            value: 10,
        };
        let plan = InjectionPlan::new(Condition::Injection(Fraction::P30), budget.clone()).unwrap();
        assert_eq!(plan.inject_action, 3);
        assert!(InjectionPlan::new(Condition::Oracle, budget).is_err());
    }

    proptest! {
        #[test]
        fn injection_action_monotone_and_bounded(budget in 1u32..5000, i in 0usize..5, j in 0usize..5) {
            let (fi, fj) = (Fraction::ALL[i.min(j)], Fraction::ALL[i.max(j)]);
            let a = injection_action_at(budget, fi).unwrap();
            let b = injection_action_at(budget, fj).unwrap();
            prop_assert!(a <= b);
            prop_assert!((1..=budget).contains(&a));
            let bigger = injection_action_at(budget + 1, fi).unwrap();
            prop_assert!(a <= bigger);
        }

        #[test]
        fn injection_action_matches_float_formula(budget in 1u32..5000, i in 0usize..5) {
            let f = Fraction::ALL[i];
            let float = ((f64::from(budget) * f64::from(f.tenths())) / 10.0).floor().max(1.0);
            prop_assert_eq!(f64::from(injection_action_at(budget, f).unwrap()), float);
        }
    }
}
