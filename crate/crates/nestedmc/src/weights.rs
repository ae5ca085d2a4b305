//! Recycling weights: the density ratio between a target scenario's inner
//! law and a reference scenario's inner law, evaluated on the reference's
//! own draws.
//!
//! Every supported model admits a closed form in the first-transition
//! value (or, for the barrier portfolio, in the (minimum, final) pair that
//! summarizes the whole inner path). Closed forms are computed in log
//! space and exponentiated once: the constant factors contain exponents of
//! order (ln(target/reference))^2 / (sigma^2 dt), which overflow quickly
//! when evaluated naively on far-apart scenario pairs.
//!
//! Weights are deliberately not self-normalized — the recycling estimator
//! is the plain importance-weighted mean, and its unbiasedness depends on
//! the raw ratio.

use crate::empirical::EmpiricalRatio;
use crate::error::{Error, Result};
use crate::models::{transition_density, GbmParams, GmwbParams, Model, OuterScenario, Rsln2Params, VasicekParams};

/// The per-path datum a weight is evaluated at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightInput {
    /// First post-horizon grid value.
    FirstStep(f64),
    /// First post-horizon value plus the regime it was drawn under.
    FirstStepRegime { value: f64, regime: u8 },
    /// Running minimum and final value over the whole inner horizon.
    MinFinal { min: f64, final_value: f64 },
}

impl WeightInput {
    /// The scalar used for binned (non-parametric) reweighting: the value
    /// itself, or the final price for path summaries.
    pub fn binning_value(&self) -> f64 {
        match *self {
            WeightInput::FirstStep(v) => v,
            WeightInput::FirstStepRegime { value, .. } => value,
            WeightInput::MinFinal { final_value, .. } => final_value,
        }
    }
}

/// A weight evaluator specialized to one (reference, target) scenario
/// pair, with all pair constants precomputed.
#[derive(Clone, Debug)]
pub enum PairWeight {
    /// Reference and target coincide: the weight is identically one.
    Unit,
    /// Lognormal one-step ratio: exp(log_a + b * ln y).
    Gbm { log_a: f64, b: f64 },
    /// Normal one-step ratio: exp(log_a + b * y).
    Vasicek { log_a: f64, b: f64 },
    /// Regime-probability ratio times a lognormal density ratio, per
    /// first-step regime. `regime_log_ratio` is NaN when the regime is
    /// unreachable from both scenarios (0/0).
    Rsln2 {
        regime_log_ratio: [f64; 2],
        drift_dt: [f64; 2],
        inv_two_var: [f64; 2],
        log_diff: f64,
        log_sum: f64,
    },
    /// Shifted-lognormal one-step ratio: exp(b * (offset + ln(z + shift))).
    Gmwb { b: f64, offset: f64, shift: f64 },
    /// Joint (minimum, final) ratio for a lognormal price on the inner
    /// horizon.
    BarrierJoint {
        x_ref: f64,
        x_target: f64,
        log_x_ref: f64,
        log_x_target: f64,
        /// ln(x_ref / x_target) / (sigma^2 * horizon).
        c1: f64,
        /// 0.5 * (ln x_ref + ln x_target).
        half_log_sum: f64,
        /// (r - sigma^2/2) * horizon.
        nu_delta: f64,
    },
    /// Toy-model normal-shift ratio: exp(slope * z + offset).
    Toy { slope: f64, offset: f64 },
    /// Binned empirical ratio evaluated on the input's binning value.
    Empirical(EmpiricalRatio),
}

fn positive_pair(x_ref: f64, x_target: f64) -> Result<()> {
    if x_ref > 0.0 && x_target > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "scenario values must be positive, got reference {x_ref} and target {x_target}"
        )))
    }
}

fn positive_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "weights need a positive volatility, got {sigma}"
        )))
    }
}

fn positive_dt(dt: f64) -> Result<()> {
    if dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("weights need a positive step, got {dt}")))
    }
}

impl PairWeight {
    /// Lognormal one-step weight (pricing-measure drift `r`).
    ///
    /// An exactly equal pair is the identity weight before any scenario
    /// validation: two copies of one scenario share one law whether or not
    /// that law is simulable, and degenerate scenarios rely on this.
    pub fn gbm(p: &GbmParams, dt: f64, x_ref: f64, x_target: f64) -> Result<Self> {
        positive_sigma(p.sigma)?;
        positive_dt(dt)?;
        if x_ref == x_target {
            return Ok(PairWeight::Unit);
        }
        positive_pair(x_ref, x_target)?;
        let b = (x_target / x_ref).ln() / (p.sigma * p.sigma * dt);
        let log_a = b * (-0.5 * (x_ref.ln() + x_target.ln()) - (p.r - 0.5 * p.sigma * p.sigma) * dt);
        Ok(PairWeight::Gbm { log_a, b })
    }

    /// Normal one-step weight for the mean-reverting rate model.
    pub fn vasicek(p: &VasicekParams, dt: f64, x_ref: f64, x_target: f64) -> Result<Self> {
        positive_sigma(p.sigma)?;
        positive_dt(dt)?;
        if x_ref == x_target {
            return Ok(PairWeight::Unit);
        }
        let decay = (-p.kappa * dt).exp();
        let var = p.sigma * p.sigma * (1.0 - decay * decay) / (2.0 * p.kappa);
        let b = decay * (x_target - x_ref) / var;
        let log_a = -decay
            * (x_target - x_ref)
            * (decay * (x_target + x_ref) + 2.0 * p.theta * (1.0 - decay))
            / (2.0 * var);
        Ok(PairWeight::Vasicek { log_a, b })
    }

    /// Regime-switching weight; both scenarios must carry their regime.
    ///
    /// Errors at construction when the target can reach a first-step
    /// regime the reference cannot (the ratio would be infinite on a set
    /// of positive target probability).
    pub fn rsln2(
        p: &Rsln2Params,
        dt: f64,
        reference: &OuterScenario,
        target: &OuterScenario,
    ) -> Result<Self> {
        positive_dt(dt)?;
        positive_pair(reference.value, target.value)?;
        let ref_regime = reference
            .regime
            .ok_or_else(|| Error::InvalidParameter("reference scenario needs a regime".into()))?;
        let target_regime = target
            .regime
            .ok_or_else(|| Error::InvalidParameter("target scenario needs a regime".into()))?;
        if !(ref_regime == 1 || ref_regime == 2) || !(target_regime == 1 || target_regime == 2) {
            return Err(Error::InvalidParameter(format!(
                "regimes must be 1 or 2, got reference {ref_regime} and target {target_regime}"
            )));
        }
        if reference == target {
            return Ok(PairWeight::Unit);
        }
        let row = |from: u8| -> [f64; 2] {
            let switch = if from == 1 { p.p12 } else { p.p21 };
            if from == 1 {
                [1.0 - switch, switch]
            } else {
                [switch, 1.0 - switch]
            }
        };
        let ref_row = row(ref_regime);
        let target_row = row(target_regime);
        let mut regime_log_ratio = [0.0; 2];
        for s in 0..2 {
            regime_log_ratio[s] = if ref_row[s] > 0.0 {
                (target_row[s] / ref_row[s]).ln()
            } else if target_row[s] > 0.0 {
                return Err(Error::SupportMismatch(format!(
                    "target regime {target_regime} reaches first-step regime {} which \
                     reference regime {ref_regime} never produces",
                    s + 1
                )));
            } else {
                // Unreachable from either side; flagged if ever evaluated.
                f64::NAN
            };
        }
        Ok(PairWeight::Rsln2 {
            regime_log_ratio,
            drift_dt: [p.mu1 * dt, p.mu2 * dt],
            inv_two_var: [
                1.0 / (2.0 * p.sigma1 * p.sigma1 * dt),
                1.0 / (2.0 * p.sigma2 * p.sigma2 * dt),
            ],
            log_diff: target.value.ln() - reference.value.ln(),
            log_sum: target.value.ln() + reference.value.ln(),
        })
    }

    /// Shifted-lognormal weight for the withdrawal-contract fund account.
    ///
    /// As with the other families, an exactly equal pair short-circuits to
    /// the identity weight before the positivity check: a depleted target
    /// recycling from a depleted reference (both at fund value zero, one
    /// shared point-mass law) is legitimate and weighs every draw at one.
    pub fn gmwb(p: &GmwbParams, dt: f64, x_ref: f64, x_target: f64) -> Result<Self> {
        positive_sigma(p.sigma)?;
        positive_dt(dt)?;
        if x_ref == x_target {
            return Ok(PairWeight::Unit);
        }
        positive_pair(x_ref, x_target)?;
        let b = (x_target / x_ref).ln() / (p.sigma * p.sigma * dt);
        let offset =
            -0.5 * (x_ref.ln() + x_target.ln()) - (p.r - p.m_f - 0.5 * p.sigma * p.sigma) * dt;
        Ok(PairWeight::Gmwb { b, offset, shift: p.w * dt })
    }

    /// Joint (minimum, final) weight for a lognormal price over the whole
    /// inner horizon (pricing drift `r`).
    ///
    /// The running minimum of a continuous path never exceeds its starting
    /// point, so the reference's draws cover the target's support only when
    /// `x_target <= x_ref`. Reweighting upward is still well defined on
    /// every reference draw but integrates to less than one: the mass of
    /// target paths whose minimum stays above `x_ref` — probability
    /// shrinking with the scenario gap — is unreachable from the reference.
    /// Keeping targets close to (or below) their reference keeps that
    /// truncation negligible.
    pub fn barrier_joint(p: &GbmParams, horizon: f64, x_ref: f64, x_target: f64) -> Result<Self> {
        positive_sigma(p.sigma)?;
        positive_dt(horizon)?;
        if x_ref == x_target {
            return Ok(PairWeight::Unit);
        }
        positive_pair(x_ref, x_target)?;
        Ok(PairWeight::BarrierJoint {
            x_ref,
            x_target,
            log_x_ref: x_ref.ln(),
            log_x_target: x_target.ln(),
            c1: (x_ref / x_target).ln() / (p.sigma * p.sigma * horizon),
            half_log_sum: 0.5 * (x_ref.ln() + x_target.ln()),
            nu_delta: (p.r - 0.5 * p.sigma * p.sigma) * horizon,
        })
    }

    /// Toy-model weight: ratio of unit-variance normal densities centered
    /// at the negated scenarios.
    pub fn toy(x_ref: f64, x_target: f64) -> Self {
        if x_ref == x_target {
            return PairWeight::Unit;
        }
        PairWeight::Toy {
            slope: x_ref - x_target,
            offset: 0.5 * (x_ref * x_ref - x_target * x_target),
        }
    }

    /// Wrap a binned empirical ratio as a pair weight.
    pub fn empirical(ratio: EmpiricalRatio) -> Self {
        PairWeight::Empirical(ratio)
    }

    /// Evaluate the weight on one path record.
    pub fn evaluate(&self, input: &WeightInput) -> Result<f64> {
        match (self, input) {
            (PairWeight::Unit, _) => Ok(1.0),
            (PairWeight::Gbm { log_a, b }, WeightInput::FirstStep(y)) => {
                if *y <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "lognormal weight input must be positive, got {y}"
                    )));
                }
                Ok((log_a + b * y.ln()).exp())
            }
            (PairWeight::Vasicek { log_a, b }, WeightInput::FirstStep(y)) => {
                Ok((log_a + b * y).exp())
            }
            (
                PairWeight::Rsln2 { regime_log_ratio, drift_dt, inv_two_var, log_diff, log_sum },
                WeightInput::FirstStepRegime { value, regime },
            ) => {
                if !(*regime == 1 || *regime == 2) {
                    return Err(Error::InvalidParameter(format!(
                        "first-step regime must be 1 or 2, got {regime}"
                    )));
                }
                if *value <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "lognormal weight input must be positive, got {value}"
                    )));
                }
                let s = (*regime - 1) as usize;
                let lr = regime_log_ratio[s];
                if lr.is_nan() {
                    return Err(Error::SupportMismatch(format!(
                        "first-step regime {regime} is unreachable from both scenarios"
                    )));
                }
                let log_value =
                    log_diff * (2.0 * value.ln() - log_sum - 2.0 * drift_dt[s]) * inv_two_var[s];
                Ok((lr + log_value).exp())
            }
            (PairWeight::Gmwb { b, offset, shift }, WeightInput::FirstStep(z)) => {
                let u = z + shift;
                if u <= 0.0 {
                    // Outside the target's (and reference's) support.
                    return Ok(0.0);
                }
                Ok((b * (offset + u.ln())).exp())
            }
            (
                PairWeight::BarrierJoint {
                    x_ref,
                    x_target,
                    log_x_ref,
                    log_x_target,
                    c1,
                    half_log_sum,
                    nu_delta,
                },
                WeightInput::MinFinal { min, final_value },
            ) => {
                let (z1, z2) = (*min, *final_value);
                if !(z1 > 0.0 && z2 >= z1) {
                    return Err(Error::InvalidParameter(format!(
                        "need 0 < min <= final, got ({z1}, {z2})"
                    )));
                }
                if z1 > *x_ref {
                    return Err(Error::SupportMismatch(format!(
                        "minimum {z1} exceeds the reference start {x_ref}: \
                         the reference law puts no mass here"
                    )));
                }
                if z1 > *x_target {
                    // Impossible under the target law: zero weight.
                    return Ok(0.0);
                }
                let t = z2.ln() - 2.0 * z1.ln();
                let u_target = t + log_x_target;
                let u_ref = t + log_x_ref;
                if u_ref <= 0.0 {
                    return Err(Error::SupportMismatch(format!(
                        "reference density degenerates at (min, final) = ({z1}, {z2})"
                    )));
                }
                if u_target <= 0.0 {
                    return Ok(0.0);
                }
                Ok((c1 * (t + half_log_sum + nu_delta) + (u_target / u_ref).ln()).exp())
            }
            (PairWeight::Toy { slope, offset }, WeightInput::FirstStep(z)) => {
                Ok((slope * z + offset).exp())
            }
            (PairWeight::Empirical(ratio), input) => Ok(ratio.evaluate(input.binning_value())),
            (w, i) => Err(Error::InvalidParameter(format!(
                "weight input {i:?} does not match the weight family {w:?}"
            ))),
        }
    }
}

/// Closed-form lognormal one-step weight.
pub fn gbm_weight(p: &GbmParams, dt: f64, x_ref: f64, x_target: f64, y: f64) -> Result<f64> {
    PairWeight::gbm(p, dt, x_ref, x_target)?.evaluate(&WeightInput::FirstStep(y))
}

/// Closed-form normal one-step weight for the mean-reverting rate model.
pub fn vasicek_weight(p: &VasicekParams, dt: f64, x_ref: f64, x_target: f64, y: f64) -> Result<f64> {
    PairWeight::vasicek(p, dt, x_ref, x_target)?.evaluate(&WeightInput::FirstStep(y))
}

/// Closed-form regime-switching weight at first-step value `y` and
/// first-step regime `s`.
pub fn rsln2_weight(
    p: &Rsln2Params,
    dt: f64,
    reference: &OuterScenario,
    target: &OuterScenario,
    y: f64,
    s: u8,
) -> Result<f64> {
    PairWeight::rsln2(p, dt, reference, target)?
        .evaluate(&WeightInput::FirstStepRegime { value: y, regime: s })
}

/// Closed-form shifted-lognormal weight at raw first-step fund value `z`.
pub fn gmwb_weight(p: &GmwbParams, dt: f64, x_ref: f64, x_target: f64, z: f64) -> Result<f64> {
    PairWeight::gmwb(p, dt, x_ref, x_target)?.evaluate(&WeightInput::FirstStep(z))
}

/// Closed-form joint (minimum, final) weight over the inner horizon.
pub fn barrier_joint_weight(
    p: &GbmParams,
    horizon: f64,
    x_ref: f64,
    x_target: f64,
    z_min: f64,
    z_final: f64,
) -> Result<f64> {
    PairWeight::barrier_joint(p, horizon, x_ref, x_target)?
        .evaluate(&WeightInput::MinFinal { min: z_min, final_value: z_final })
}

/// Generic weight as a direct ratio of one-step transition densities.
///
/// `to` is the destination state (with regime for regime-switching
/// models). A 0/0 ratio is a parameter error; target mass where the
/// reference has none is a support mismatch.
pub fn generic_ratio_weight(
    model: &Model,
    reference: &OuterScenario,
    target: &OuterScenario,
    to: &OuterScenario,
    dt: f64,
) -> Result<f64> {
    let numerator = transition_density(model, target, to, dt)?;
    let denominator = transition_density(model, reference, to, dt)?;
    if denominator > 0.0 {
        Ok(numerator / denominator)
    } else if numerator == 0.0 {
        Err(Error::InvalidParameter(format!(
            "both densities vanish at {to:?}: the ratio is undefined"
        )))
    } else {
        Err(Error::SupportMismatch(format!(
            "target density {numerator} is positive at {to:?} where the reference density is zero"
        )))
    }
}

/// Normalized joint density of (running minimum, final value) of a
/// lognormal price over `horizon`, started at `x`, pricing drift `r`.
///
/// Density in price coordinates; zero outside 0 < z_min <= min(x, z_final).
pub fn barrier_joint_density(
    p: &GbmParams,
    horizon: f64,
    x: f64,
    z_min: f64,
    z_final: f64,
) -> Result<f64> {
    positive_sigma(p.sigma)?;
    positive_dt(horizon)?;
    if x <= 0.0 {
        return Err(Error::InvalidParameter(format!("start must be positive, got {x}")));
    }
    if z_min <= 0.0 || z_final < z_min || z_min > x {
        return Ok(0.0);
    }
    let nu = p.r - 0.5 * p.sigma * p.sigma;
    let sig2 = p.sigma * p.sigma;
    let a = (z_min / x).ln();
    let w = (z_final / x).ln();
    // Joint density of (minimum, endpoint) of a drifted Brownian motion,
    // by the reflection principle, times the 1/(z1 z2) price Jacobian.
    let spread = w - 2.0 * a;
    if spread <= 0.0 {
        return Ok(0.0);
    }
    let log_density = (2.0 * spread / (sig2 * horizon * crate::math::SQRT_TWO_PI * p.sigma * horizon.sqrt())).ln()
        + nu * w / sig2
        - nu * nu * horizon / (2.0 * sig2)
        - spread * spread / (2.0 * sig2 * horizon);
    Ok(log_density.exp() / (z_min * z_final))
}
