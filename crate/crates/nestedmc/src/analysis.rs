//! Variance analysis on the analytically tractable toy model.
//!
//! The toy model: an outer state X uniform on [-1, 1], one inner draw
//! Z ~ N(-x, 1), and inner value g(z) = sqrt(2/pi) exp(-2 z^2). Everything
//! the estimators do on it — means, variances, recycling weights — reduces
//! to Gaussian integrals, so the engine can be judged against closed
//! forms.
//!
//! Two constant sets are provided. [`compute_toy_constants`] evaluates
//! the source derivation's printed integrands verbatim. Those integrands
//! carry sign errors in their x_1-dependent factors: the A_1 integrand,
//! for example, must lose its x_1 dependence entirely (the recycling
//! weight integrates to one against the reference density), yet the
//! printed form keeps an exp(x_1^2 - x_1 x_i) factor, and no symmetric
//! repair of that factor reproduces direct Monte Carlo integration of the
//! defining expectation. [`consistent_toy_constants`] evaluates the same
//! integrals with the x_1 factors re-derived (verified against Monte
//! Carlo); simulated estimator variances match this set.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{estimate_sn, estimate_sr, InnerProblem, ReferencePlan, RunContext};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::math::{mean_and_variance, normal_cdf, KahanSum};
use crate::models::{self, Model, OuterScenario, ToyParams};
use crate::quadrature::{integrate2, integrate3};
use crate::weights::{PairWeight, WeightInput};
use rand_chacha::ChaCha8Rng;

/// The scalar constants of the toy model's variance formulas: moments of
/// the inner value g (B_1, B_2) and of the weighted inner value (A_1,
/// A_2, C, D) under the reference scenario's sampling law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConstants {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
    pub d: f64,
}

impl ToyModelConstants {
    pub fn validate(&self) -> Result<()> {
        if self.b2 < self.b1 * self.b1 {
            return Err(Error::InvalidParameter(format!(
                "second moment {} below squared mean {}",
                self.b2,
                self.b1 * self.b1
            )));
        }
        if !(self.d >= 0.0) {
            return Err(Error::InvalidParameter(format!("cross moment d must be >= 0, got {}", self.d)));
        }
        Ok(())
    }
}

/// Closed forms of the mean and second moment of the payoff under a
/// uniform scenario: (b1, b2). b1 is also the exact value the estimators
/// target, so it doubles as the synthetic example's ground truth.
pub fn b_constants() -> (f64, f64) {
    let b1 = normal_cdf(2.0 / 5.0f64.sqrt()) - 0.5;
    let b2 = (1.0 / std::f64::consts::PI.sqrt()) * (normal_cdf((8.0f64 / 9.0).sqrt()) - 0.5);
    (b1, b2)
}

/// The printed A_l integrand over (x_i, x_1); `x1_sq` and `x1_cross` are
/// the coefficients of x_1^2 and x_1 x_i inside the bracket, so the
/// corrected variants below can share the code.
fn a_l_integral(l: u32, x1_sq: f64, x1_cross: f64, tol: f64) -> Result<f64> {
    let lf = l as f64;
    let pref = (2.0 / std::f64::consts::PI).sqrt().powi(l as i32) * 0.25 / (4.0 * lf + 1.0).sqrt();
    let xi_sq = 3.0 * lf * lf + lf;
    let denom = 8.0 * lf + 2.0;
    integrate2(
        |xi, x1| pref * (-(xi_sq * xi * xi + x1_sq * x1 * x1 + x1_cross * x1 * xi) / denom).exp(),
        -1.0,
        1.0,
        -1.0,
        1.0,
        tol,
    )
}

fn c_integral(x1_sq: f64, x1_cross: f64, tol: f64) -> Result<f64> {
    let pref = 1.0 / (6.0 * std::f64::consts::PI);
    integrate2(
        |xi, x1| pref * (-(4.0 / 9.0) * xi * xi + x1_sq * x1 * x1 + x1_cross * x1 * xi).exp(),
        -1.0,
        1.0,
        -1.0,
        1.0,
        tol,
    )
}

fn d_integral(x1_sq: f64, x1_cross: f64, tol: f64) -> Result<f64> {
    let pref = 1.0 / (12.0 * std::f64::consts::PI);
    integrate3(
        |x1, xi, xj| {
            pref * (-(4.0 / 9.0) * (xi * xi + xj * xj)
                + x1_sq * x1 * x1
                + x1_cross * x1 * (xi + xj)
                + xi * xj / 9.0)
                .exp()
        },
        -1.0,
        1.0,
        -1.0,
        1.0,
        -1.0,
        1.0,
        tol,
    )
}

/// Three-dimensional cells cost two orders of magnitude more per digit,
/// so the cross-moment d gets a proportionally looser tolerance.
fn d_tolerance(tol: f64) -> f64 {
    (tol * 100.0).max(tol)
}

/// Evaluate the toy constants from the source derivation's printed
/// integrands, verbatim. B_1 and B_2 are closed forms in the normal CDF;
/// the rest are adaptive quadratures at absolute tolerance `tol` (the
/// 3-D integral d at 100·tol).
pub fn compute_toy_constants(tol: f64) -> Result<ToyModelConstants> {
    let (b1, b2) = b_constants();
    let consts = ToyModelConstants {
        a1: a_l_integral(1, -10.0, 10.0, tol)?,
        a2: a_l_integral(2, -46.0, 40.0, tol)?,
        b1,
        b2,
        c: c_integral(1.0, -1.0, tol)?,
        d: d_integral(1.5, -1.0, d_tolerance(tol))?,
    };
    consts.validate()?;
    Ok(consts)
}

/// Evaluate the toy constants with the x_1-dependent factors re-derived
/// from the defining expectations (the set simulation agrees with):
/// A_1 loses its x_1 dependence and equals B_1, C equals B_2, and A_2 and
/// d keep the printed prefactors with corrected x_1 coefficients.
pub fn consistent_toy_constants(tol: f64) -> Result<ToyModelConstants> {
    let (b1, b2) = b_constants();
    let consts = ToyModelConstants {
        a1: a_l_integral(1, 0.0, 0.0, tol)?,
        // Bracket scale: [7 x_i^2 - 5 x_1^2 + 2 x_1 x_i] / 9 on the
        // printed A_2 prefactor.
        a2: a_l_integral(2, -10.0, 4.0, tol)?,
        b1,
        b2,
        c: c_integral(0.0, 0.0, tol)?,
        d: d_integral(5.0 / 9.0, -1.0 / 9.0, d_tolerance(tol))?,
    };
    consts.validate()?;
    Ok(consts)
}

/// Variance of the standard nested estimate of E[g] on the toy model with
/// `n` outer scenarios and `m` inner draws each. Requires n, m >= 1.
pub fn var_sn(consts: &ToyModelConstants, n: usize, m: usize) -> f64 {
    debug_assert!(n >= 1 && m >= 1);
    (consts.b2 - consts.b1 * consts.b1) / ((m * n) as f64)
}

/// Variance of the single-reference recycling estimate of E[g] on the toy
/// model. Requires n, m >= 1; at n = 1 it coincides with [`var_sn`].
pub fn var_sr(consts: &ToyModelConstants, n: usize, m: usize) -> f64 {
    debug_assert!(n >= 1 && m >= 1);
    let nf = n as f64;
    let mean = consts.b1 + (nf - 1.0) * consts.a1;
    let numer = consts.b2
        + (nf - 1.0) * consts.a2
        + 2.0 * (nf - 1.0) * consts.c
        + (nf * nf - 3.0 * nf + 2.0) * consts.d
        - mean * mean;
    numer / ((m) as f64 * nf * nf)
}

/// The toy inner value.
pub fn toy_payoff(z: f64) -> f64 {
    (2.0 / std::f64::consts::PI).sqrt() * (-2.0 * z * z).exp()
}

/// The toy model wired up as an inner problem: one transition per inner
/// path on the unit two-step grid.
#[derive(Clone, Debug)]
pub struct ToyProblem {
    model: Model,
    grid: TimeGrid,
}

impl ToyProblem {
    pub fn new() -> Result<Self> {
        Ok(ToyProblem {
            model: Model::Toy(ToyParams {}),
            grid: TimeGrid::new(1.0, 2.0, 1.0)?,
        })
    }
}

impl InnerProblem for ToyProblem {
    fn sample(&self, scenario: &OuterScenario, rng: &mut ChaCha8Rng) -> Result<(f64, WeightInput)> {
        let first = models::walk_inner_path(&self.model, scenario, &self.grid, rng, |_| {})?;
        Ok((toy_payoff(first.raw_value), WeightInput::FirstStep(first.raw_value)))
    }

    fn pair_weight(&self, reference: &OuterScenario, target: &OuterScenario) -> Result<PairWeight> {
        Ok(PairWeight::toy(reference.value, target.value))
    }

    fn sample_binning_values(
        &self,
        scenario: &OuterScenario,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        Ok((0..count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                -scenario.value + z
            })
            .collect())
    }
}

/// Deterministic outer design: the n midpoints of an equal partition of
/// [-1, 1], the fixed-scenario protocol the variance formulas are
/// compared against.
pub fn toy_grid_scenarios(n: usize) -> Vec<OuterScenario> {
    (1..=n)
        .map(|i| OuterScenario::plain(-1.0 + (2.0 * i as f64 - 1.0) / n as f64))
        .collect()
}

/// Outer design for the recycling protocol: the reference scenario (index
/// 0) is the stratified draw for this trial — trial t of T gets the
/// midpoint of the t-th of T equal slices of [-1, 1] — followed by the
/// n-1 grid targets.
///
/// At n = 1 there are no targets and recycling degenerates to the
/// standard estimator on one scenario, so this returns the same
/// single-point grid the standard protocol uses; with shared streams the
/// two estimators are then bit-identical, which is the defining property
/// of the n = 1 corner.
pub fn toy_stratified_scenarios(n: usize, trial: usize, trials: usize) -> Result<Vec<OuterScenario>> {
    if n < 1 || trials < 1 || trial >= trials {
        return Err(Error::InvalidParameter(format!(
            "need n >= 1 and trial < trials, got n={n}, trial={trial}, trials={trials}"
        )));
    }
    if n == 1 {
        return Ok(toy_grid_scenarios(1));
    }
    let mut scenarios = Vec::with_capacity(n);
    scenarios.push(OuterScenario::plain(-1.0 + 2.0 * (trial as f64 + 0.5) / trials as f64));
    scenarios.extend(toy_grid_scenarios(n - 1));
    Ok(scenarios)
}

/// Which loop count a variance sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    OuterCount,
    InnerCount,
}

/// One row of a variance sweep: the analytic and simulated variances of
/// both estimators at one (n, m) point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VarianceSweepRow {
    pub axis_value: usize,
    pub var_sn_analytic: f64,
    pub var_sr_analytic: f64,
    pub var_sn_empirical: f64,
    pub var_sr_empirical: f64,
}

/// Sweep one loop count, measuring empirical estimator variances over
/// independent trials against the analytic formulas evaluated on
/// `consts`.
pub fn toy_variance_sweep(
    consts: &ToyModelConstants,
    axis: SweepAxis,
    values: &[usize],
    fixed: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<VarianceSweepRow>> {
    if trials < 2 {
        return Err(Error::InvalidParameter("variance needs at least two trials".into()));
    }
    let problem = ToyProblem::new()?;
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let (n, m) = match axis {
            SweepAxis::OuterCount => (v, fixed),
            SweepAxis::InnerCount => (fixed, v),
        };
        if n < 1 || m < 1 {
            return Err(Error::InvalidParameter("loop counts must be at least 1".into()));
        }
        let estimates: Vec<(f64, f64)> = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<(f64, f64)> {
                let ctx = RunContext { seed, trial: t as u64 };
                let sn_scenarios = toy_grid_scenarios(n);
                let sn = estimate_sn(&problem, &sn_scenarios, m, &ctx)?;
                let sr_scenarios = toy_stratified_scenarios(n, t, trials)?;
                let plan = ReferencePlan::single(0, n);
                let sr = estimate_sr(&problem, &sr_scenarios, &plan, m, &ctx)?;
                let mut sn_sum = KahanSum::new();
                for &l in &sn.losses {
                    sn_sum.add(l);
                }
                let mut sr_sum = KahanSum::new();
                for &l in &sr.losses {
                    sr_sum.add(l);
                }
                Ok((sn_sum.total() / n as f64, sr_sum.total() / n as f64))
            })
            .collect::<Result<_>>()?;
        let sn_values: Vec<f64> = estimates.iter().map(|e| e.0).collect();
        let sr_values: Vec<f64> = estimates.iter().map(|e| e.1).collect();
        let (_, sn_var) = mean_and_variance(&sn_values);
        let (_, sr_var) = mean_and_variance(&sr_values);
        rows.push(VarianceSweepRow {
            axis_value: v,
            var_sn_analytic: var_sn(consts, n, m),
            var_sr_analytic: var_sr(consts, n, m),
            var_sn_empirical: sn_var,
            var_sr_empirical: sr_var,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use rand::Rng;

    // Quadrature targets, pinned from independent high-precision
    // evaluation of the same integrals.
    const B1_REFERENCE: f64 = 0.314453315238651;
    const B2_REFERENCE: f64 = 0.184552453513701;
    const A1_PRINTED: f64 = 0.490421880047180;
    const A2_PRINTED: f64 = 0.791776393325201;
    const C_PRINTED: f64 = 0.287609309545063;
    const D_PRINTED: f64 = 0.342013683038109;
    const A2_CONSISTENT: f64 = 0.205551504;
    const D_CONSISTENT: f64 = 0.196302151230449;

    #[test]
    fn closed_form_moments_match_reference_values() {
        let (b1, b2) = b_constants();
        assert!((b1 - B1_REFERENCE).abs() < 1e-12);
        assert!((b2 - B2_REFERENCE).abs() < 1e-12);
    }

    #[test]
    fn printed_integrands_reproduce_the_printed_constants() {
        let c = compute_toy_constants(1e-8).unwrap();
        assert!((c.a1 - A1_PRINTED).abs() < 1e-6, "a1 {}", c.a1);
        assert!((c.a2 - A2_PRINTED).abs() < 1e-6, "a2 {}", c.a2);
        assert!((c.c - C_PRINTED).abs() < 1e-6, "c {}", c.c);
        assert!((c.d - D_PRINTED).abs() < 1e-5, "d {}", c.d);
    }

    #[test]
    fn printed_large_sample_constant_is_reproduced() {
        // (d - a1^2) / m at m = 1000 is the printed large-n variance
        // plateau, 1.0150e-4.
        let c = compute_toy_constants(1e-8).unwrap();
        let plateau = (c.d - c.a1 * c.a1) / 1000.0;
        assert!(
            (plateau - 1.0150e-4).abs() / 1.0150e-4 < 0.01,
            "plateau {plateau:e}"
        );
    }

    #[test]
    fn corrected_integrands_collapse_to_their_closed_forms() {
        let c = consistent_toy_constants(1e-8).unwrap();
        // With the x_1 factors corrected, the A_1 and C integrals are the
        // B moments; quadrature must agree with the CDF closed forms.
        assert!((c.a1 - c.b1).abs() < 1e-8, "a1 {} vs b1 {}", c.a1, c.b1);
        assert!((c.c - c.b2).abs() < 1e-8, "c {} vs b2 {}", c.c, c.b2);
        assert!((c.a2 - A2_CONSISTENT).abs() < 1e-6, "a2 {}", c.a2);
        assert!((c.d - D_CONSISTENT).abs() < 1e-5, "d {}", c.d);
    }

    #[test]
    fn corrected_constants_match_direct_monte_carlo_integration() {
        // Direct Monte Carlo integration of the defining expectations:
        // x_1, x_i, x_j uniform on [-1,1], z normal around -x_1, then
        // averages of (w g), (w g)^2, (w g) g and (w_i g)(w_j g). The
        // quadrature values must sit within four standard errors.
        let n: usize = 10_000_000;
        let chunks: usize = 256;
        let per = n / chunks;
        let sums: Vec<[f64; 8]> = (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = stream(814, StreamKind::Measure, 0, chunk as u64);
                let mut acc = [0.0f64; 8];
                for _ in 0..per {
                    let x1: f64 = rng.random_range(-1.0..1.0);
                    let xi: f64 = rng.random_range(-1.0..1.0);
                    let xj: f64 = rng.random_range(-1.0..1.0);
                    let z: f64 = -x1 + rng.sample::<f64, _>(StandardNormal);
                    let g = toy_payoff(z);
                    let wi = ((x1 - xi) * z + 0.5 * (x1 * x1 - xi * xi)).exp();
                    let wj = ((x1 - xj) * z + 0.5 * (x1 * x1 - xj * xj)).exp();
                    let vals =
                        [wi * g, (wi * g) * (wi * g), wi * g * g, (wi * g) * (wj * g)];
                    for (k, v) in vals.iter().enumerate() {
                        acc[2 * k] += v;
                        acc[2 * k + 1] += v * v;
                    }
                }
                acc
            })
            .collect();
        let total = chunks * per;
        let consts = consistent_toy_constants(1e-8).unwrap();
        let targets = [consts.a1, consts.a2, consts.c, consts.d];
        let names = ["a1", "a2", "c", "d"];
        for k in 0..4 {
            let sum: f64 = sums.iter().map(|a| a[2 * k]).sum();
            let sumsq: f64 = sums.iter().map(|a| a[2 * k + 1]).sum();
            let mean = sum / total as f64;
            let var = (sumsq - sum * sum / total as f64) / (total as f64 - 1.0);
            let se = (var / total as f64).sqrt();
            assert!(
                (mean - targets[k]).abs() < 4.0 * se,
                "{}: mc {} vs quadrature {} (se {})",
                names[k],
                mean,
                targets[k],
                se
            );
        }
    }

    #[test]
    fn nested_variance_scales_inversely_in_both_counts() {
        let c = compute_toy_constants(1e-6).unwrap();
        assert_eq!(var_sn(&c, 1, 1), c.b2 - c.b1 * c.b1);
        assert_eq!(var_sn(&c, 2, 10), var_sn(&c, 1, 10) / 2.0);
        assert_eq!(var_sn(&c, 7, 20), var_sn(&c, 7, 10) / 2.0);
        assert_eq!(var_sr(&c, 7, 20), var_sr(&c, 7, 10) / 2.0);
    }

    #[test]
    fn recycling_variance_at_one_scenario_equals_the_nested_variance() {
        for consts in [compute_toy_constants(1e-6).unwrap(), consistent_toy_constants(1e-6).unwrap()]
        {
            for m in [1usize, 10, 1000] {
                assert_eq!(var_sr(&consts, 1, m), var_sn(&consts, 1, m));
            }
        }
    }

    #[test]
    fn recycling_variance_plateaus_at_the_cross_moment_gap() {
        let c = compute_toy_constants(1e-6).unwrap();
        let limit = (c.d - c.a1 * c.a1) / 50.0;
        let at_large_n = var_sr(&c, 1_000_000, 50);
        assert!(
            (at_large_n - limit).abs() / limit < 1e-4,
            "{at_large_n} vs {limit}"
        );
    }

    #[test]
    fn recycling_variance_dominates_nested_variance_beyond_one_scenario() {
        // The qualitative ordering behind the variance figure: recycling
        // trades compute for variance, so per-(n, m) its variance is
        // never below the nested estimator's.
        for consts in [compute_toy_constants(1e-6).unwrap(), consistent_toy_constants(1e-6).unwrap()]
        {
            for n in 2..=1000usize {
                for m in [10usize, 100, 1000, 10000] {
                    assert!(
                        var_sr(&consts, n, m) >= var_sn(&consts, n, m),
                        "n={n}, m={m}"
                    );
                }
            }
        }
    }

    #[test]
    fn toy_problem_samples_the_shifted_normal_and_weighs_reflexively() {
        let problem = ToyProblem::new().unwrap();
        let scenario = OuterScenario::plain(0.25);
        let mut rng = stream(3, StreamKind::Inner, 0, 0);
        let mut values = Vec::new();
        for _ in 0..50_000 {
            let (payoff, wi) = problem.sample(&scenario, &mut rng).unwrap();
            assert!((payoff - toy_payoff(wi.binning_value())).abs() < 1e-15);
            values.push(wi.binning_value());
        }
        let (mean, var) = mean_and_variance(&values);
        assert!((mean + 0.25).abs() < 4.0 * (var / values.len() as f64).sqrt());
        let w = problem.pair_weight(&scenario, &scenario).unwrap();
        assert_eq!(w.evaluate(&WeightInput::FirstStep(1.7)).unwrap(), 1.0);
    }

    #[test]
    fn scenario_designs_lay_out_midpoints_and_the_stratified_reference() {
        let grid = toy_grid_scenarios(4);
        let values: Vec<f64> = grid.iter().map(|s| s.value).collect();
        assert_eq!(values, vec![-0.75, -0.25, 0.25, 0.75]);
        let strat = toy_stratified_scenarios(4, 0, 4).unwrap();
        assert_eq!(strat[0].value, -0.75);
        assert_eq!(strat.len(), 4);
        let strat_last = toy_stratified_scenarios(4, 3, 4).unwrap();
        assert_eq!(strat_last[0].value, 0.75);
        assert!(toy_stratified_scenarios(4, 4, 4).is_err());
    }

    #[test]
    fn single_scenario_designs_coincide_and_the_estimators_tie_bitwise() {
        // At n = 1 recycling has no targets: both protocols use the same
        // one-point grid, and with shared per-scenario streams the sweep's
        // empirical variances are bit-identical.
        for trial in [0usize, 3, 7] {
            assert_eq!(toy_stratified_scenarios(1, trial, 8).unwrap(), toy_grid_scenarios(1));
        }
        let consts = consistent_toy_constants(1e-8).unwrap();
        let rows =
            toy_variance_sweep(&consts, SweepAxis::OuterCount, &[1], 40, 16, 321).unwrap();
        assert_eq!(rows[0].var_sn_empirical.to_bits(), rows[0].var_sr_empirical.to_bits());
        assert_eq!(rows[0].var_sn_analytic.to_bits(), rows[0].var_sr_analytic.to_bits());
    }
}
