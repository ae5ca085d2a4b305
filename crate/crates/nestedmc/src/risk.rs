//! Outer-stage risk functionals applied to per-scenario loss estimates.
//!
//! Mean-type measures average a transform of the losses; the quantile
//! measures use a fixed order-statistic convention so that every
//! estimator is judged by exactly the same rule: the level-α quantile is
//! the ⌈αn⌉-th order statistic, and the conditional tail expectation
//! averages the losses strictly above it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::KahanSum;

/// A risk functional over a sample of losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskMeasureSpec {
    /// Mean shortfall above a fixed threshold: E[(L - c)^+].
    ExpectedExcess { c: f64 },
    /// Probability of a loss strictly beyond the threshold: P(L > c).
    LargeLossProb { c: f64 },
    /// Discounted mean loss: e^{-r tau} E[L].
    PresentValue { r: f64, tau: f64 },
    /// Empirical level-α quantile.
    Var { alpha: f64 },
    /// Mean of the losses strictly above the level-α quantile.
    Cte { alpha: f64 },
    /// Plain mean loss.
    Mean,
}

impl RiskMeasureSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RiskMeasureSpec::ExpectedExcess { c } | RiskMeasureSpec::LargeLossProb { c } => {
                if !c.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "threshold must be finite, got {c}"
                    )));
                }
            }
            RiskMeasureSpec::PresentValue { r, tau } => {
                if !r.is_finite() || !tau.is_finite() || tau < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "discounting needs finite rate and nonnegative horizon, got ({r}, {tau})"
                    )));
                }
            }
            RiskMeasureSpec::Var { alpha } | RiskMeasureSpec::Cte { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "quantile level must lie in (0,1), got {alpha}"
                    )));
                }
            }
            RiskMeasureSpec::Mean => {}
        }
        Ok(())
    }
}

fn kahan_mean(losses: &[f64]) -> f64 {
    let mut sum = KahanSum::new();
    for &l in losses {
        sum.add(l);
    }
    sum.total() / losses.len() as f64
}

/// Index (1-based) of the level-α order statistic: ⌈αn⌉, with products
/// within 1e-9 of an integer snapped to it so that exact levels like
/// 0.7·100 are not pushed up a rank by floating-point drift.
fn quantile_rank(alpha: f64, n: usize) -> usize {
    let t = alpha * n as f64;
    let rounded = t.round();
    let rank = if (t - rounded).abs() < 1e-9 { rounded as usize } else { t.ceil() as usize };
    rank.clamp(1, n)
}

fn empirical_var(losses: &[f64], alpha: f64) -> f64 {
    let mut sorted = losses.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    sorted[quantile_rank(alpha, sorted.len()) - 1]
}

/// Apply a risk functional to a loss sample.
pub fn apply_risk_measure(spec: &RiskMeasureSpec, losses: &[f64]) -> Result<f64> {
    spec.validate()?;
    if losses.is_empty() {
        return Err(Error::InvalidParameter("cannot apply a risk measure to no losses".into()));
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::InvalidParameter(format!("losses must be finite, got {bad}")));
    }
    match *spec {
        RiskMeasureSpec::ExpectedExcess { c } => {
            let mut sum = KahanSum::new();
            for &l in losses {
                sum.add((l - c).max(0.0));
            }
            Ok(sum.total() / losses.len() as f64)
        }
        RiskMeasureSpec::LargeLossProb { c } => {
            let count = losses.iter().filter(|&&l| l > c).count();
            Ok(count as f64 / losses.len() as f64)
        }
        RiskMeasureSpec::PresentValue { r, tau } => Ok((-r * tau).exp() * kahan_mean(losses)),
        RiskMeasureSpec::Var { alpha } => Ok(empirical_var(losses, alpha)),
        RiskMeasureSpec::Cte { alpha } => {
            let var = empirical_var(losses, alpha);
            let mut sum = KahanSum::new();
            let mut count = 0usize;
            for &l in losses {
                if l > var {
                    sum.add(l);
                    count += 1;
                }
            }
            if count == 0 {
                return Err(Error::DegenerateTail(format!(
                    "no losses strictly above the level-{alpha} quantile {var}"
                )));
            }
            Ok(sum.total() / count as f64)
        }
        RiskMeasureSpec::Mean => Ok(kahan_mean(losses)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_to_hundred() -> Vec<f64> {
        (1..=100).map(|i| i as f64).collect()
    }

    #[test]
    fn quantile_uses_the_ceil_alpha_n_order_statistic() {
        let spec = RiskMeasureSpec::Var { alpha: 0.7 };
        assert_eq!(apply_risk_measure(&spec, &one_to_hundred()).unwrap(), 70.0);
        // Non-integer product rounds up: 0.75 of 6 points -> 5th.
        let spec = RiskMeasureSpec::Var { alpha: 0.75 };
        assert_eq!(apply_risk_measure(&spec, &[6.0, 1.0, 3.0, 2.0, 5.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn tail_expectation_averages_strictly_above_the_quantile() {
        let spec = RiskMeasureSpec::Cte { alpha: 0.9 };
        assert_eq!(apply_risk_measure(&spec, &one_to_hundred()).unwrap(), 95.5);
    }

    #[test]
    fn tail_expectation_fails_when_nothing_exceeds_the_quantile() {
        let spec = RiskMeasureSpec::Cte { alpha: 0.9 };
        let r = apply_risk_measure(&spec, &[1.0, 1.0, 1.0]);
        assert!(matches!(r, Err(Error::DegenerateTail(_))));
    }

    #[test]
    fn excess_below_the_minimum_is_the_shifted_mean() {
        let spec = RiskMeasureSpec::ExpectedExcess { c: -10.0 };
        let got = apply_risk_measure(&spec, &one_to_hundred()).unwrap();
        assert!((got - 60.5).abs() < 1e-12);
    }

    #[test]
    fn exceedance_probability_counts_strict_exceedances() {
        let spec = RiskMeasureSpec::LargeLossProb { c: 2.0 };
        let got = apply_risk_measure(&spec, &[1.0, 2.0, 3.0]).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn present_value_discounts_the_mean() {
        let spec = RiskMeasureSpec::PresentValue { r: 0.05, tau: 2.0 };
        let got = apply_risk_measure(&spec, &[2.0, 4.0]).unwrap();
        assert!((got - 3.0 * (-0.1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn quantile_translates_exactly_with_the_sample() {
        let losses = vec![3.0, -1.0, 7.5, 2.25, 0.5, 9.0, -4.0];
        let shifted: Vec<f64> = losses.iter().map(|l| l + 3.25).collect();
        for alpha in [0.1, 0.35, 0.5, 0.7, 0.95] {
            let spec = RiskMeasureSpec::Var { alpha };
            let base = apply_risk_measure(&spec, &losses).unwrap();
            let moved = apply_risk_measure(&spec, &shifted).unwrap();
            assert_eq!(moved, base + 3.25);
        }
    }

    #[test]
    fn measures_are_monotone_in_the_sample() {
        let lo = vec![1.0, 4.0, 2.0, 8.0, 5.0];
        let hi: Vec<f64> = lo.iter().map(|l| l + 0.75).collect();
        let specs = [
            RiskMeasureSpec::ExpectedExcess { c: 3.0 },
            RiskMeasureSpec::Var { alpha: 0.6 },
            RiskMeasureSpec::Cte { alpha: 0.6 },
            RiskMeasureSpec::Mean,
        ];
        for spec in specs {
            let a = apply_risk_measure(&spec, &lo).unwrap();
            let b = apply_risk_measure(&spec, &hi).unwrap();
            assert!(b >= a, "{spec:?}: {b} < {a}");
        }
    }

    #[test]
    fn excess_is_convex_and_nonincreasing_in_the_threshold() {
        let losses = one_to_hundred();
        let cs: Vec<f64> = (0..40).map(|i| -5.0 + 3.0 * i as f64).collect();
        let vals: Vec<f64> = cs
            .iter()
            .map(|&c| apply_risk_measure(&RiskMeasureSpec::ExpectedExcess { c }, &losses).unwrap())
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "not nonincreasing: {} then {}", w[0], w[1]);
        }
        for w in vals.windows(3) {
            // Equally spaced thresholds: convexity is a nonnegative second
            // difference.
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9, "second difference {:?}", w);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let spec = RiskMeasureSpec::Mean;
        assert!(apply_risk_measure(&spec, &[]).is_err());
        assert!(apply_risk_measure(&spec, &[1.0, f64::NAN]).is_err());
        assert!(RiskMeasureSpec::Var { alpha: 1.0 }.validate().is_err());
        assert!(RiskMeasureSpec::ExpectedExcess { c: f64::INFINITY }.validate().is_err());
    }
}
