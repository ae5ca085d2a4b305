//! Portfolio loss definitions for the three worked examples — a barrier
//! option book, a basket of short average-price calls, and a guaranteed
//! withdrawal contract — plus a single-option test problem, pricing
//! helpers for the purchase constants, and the brute-force loss-curve
//! oracle the experiment reports are judged against.
//!
//! Each problem implements [`InnerProblem`]: it knows how to draw one
//! discounted inner value from an outer scenario and which closed-form
//! weight family links two scenarios to each other.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::InnerProblem;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::math::{mean_and_variance, KahanSum};
use crate::models::{self, GbmParams, GmwbParams, Model, OuterScenario};
use crate::rng::{stream, StreamKind};
use crate::weights::{PairWeight, WeightInput};

/// Stream `trial` coordinate used by loss-curve oracle builds.
const ORACLE_TRIAL_CURVE: u64 = 0;
/// Stream `trial` coordinate used by time-zero pricing runs, so they
/// never share draws with curve builds under the same seed.
const ORACLE_TRIAL_PRICING: u64 = 1;

fn draw_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Exactly sample the pair (running minimum, final value) of a geometric
/// Brownian path over `horizon`, starting at `start`, with total drift
/// rate `drift`.
///
/// The final value is drawn from its lognormal law; the minimum is then
/// drawn from the Brownian-bridge law of the running minimum given the
/// endpoint, by inverting its conditional distribution. Zero volatility
/// degenerates to the deterministic growth path. Every call consumes one
/// normal and one uniform draw regardless of parameters.
pub fn simulate_min_final(
    start: f64,
    drift: f64,
    sigma: f64,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    if !(start > 0.0) {
        return Err(Error::InvalidParameter(format!("start must be positive, got {start}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("volatility must be nonnegative, got {sigma}")));
    }
    let nu = drift - 0.5 * sigma * sigma;
    let w = nu * horizon + sigma * horizon.sqrt() * draw_standard_normal(rng);
    // Uniform on (0, 1]; the open lower end keeps the log finite.
    let u: f64 = 1.0 - rng.random::<f64>();
    let disc = w * w - 2.0 * sigma * sigma * horizon * u.ln();
    let min_log = 0.5 * (w - disc.sqrt());
    Ok((start * min_log.exp(), start * w.exp()))
}

/// Side of a position in the loss convention: losses of a long position
/// fall when the option value rises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Long,
    Short,
}

impl Position {
    /// Sign the leg's value carries inside the portfolio loss.
    pub fn loss_sign(self) -> f64 {
        match self {
            Position::Long => -1.0,
            Position::Short => 1.0,
        }
    }
}

/// One down-and-out put: pays (strike - final)^+ at maturity provided the
/// price minimum over the remaining horizon stays above the barrier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierLeg {
    pub strike: f64,
    pub barrier: f64,
    pub position: Position,
}

/// Book of down-and-out puts on one lognormal asset, marked at the risk
/// horizon. The loss of a scenario is the conditional expected discounted
/// payoff (signed by position) minus the signed purchase prices.
#[derive(Clone, Debug)]
pub struct BarrierPortfolioProblem {
    params: GbmParams,
    grid: TimeGrid,
    legs: Vec<BarrierLeg>,
    purchase_prices: Vec<f64>,
    discount: f64,
    net_purchase: f64,
}

impl BarrierPortfolioProblem {
    pub fn new(
        params: GbmParams,
        grid: TimeGrid,
        legs: Vec<BarrierLeg>,
        purchase_prices: Vec<f64>,
    ) -> Result<Self> {
        if legs.is_empty() {
            return Err(Error::InvalidParameter("barrier book needs at least one leg".into()));
        }
        if legs.len() != purchase_prices.len() {
            return Err(Error::InvalidParameter(format!(
                "{} legs but {} purchase prices",
                legs.len(),
                purchase_prices.len()
            )));
        }
        for leg in &legs {
            if !(leg.strike > 0.0 && leg.barrier > 0.0) {
                return Err(Error::InvalidParameter(
                    "strikes and barriers must be positive".into(),
                ));
            }
        }
        let discount = (-params.r * grid.inner_horizon()).exp();
        let net_purchase = legs
            .iter()
            .zip(&purchase_prices)
            .map(|(leg, p)| leg.position.loss_sign() * p)
            .sum();
        Ok(BarrierPortfolioProblem { params, grid, legs, purchase_prices, discount, net_purchase })
    }

    pub fn legs(&self) -> &[BarrierLeg] {
        &self.legs
    }

    pub fn purchase_prices(&self) -> &[f64] {
        &self.purchase_prices
    }

    /// Signed discounted book payoff for one simulated (minimum, final)
    /// pair.
    pub fn discounted_book_payoff(&self, min: f64, final_value: f64) -> f64 {
        let mut total = 0.0;
        for leg in &self.legs {
            if min > leg.barrier {
                total +=
                    leg.position.loss_sign() * self.discount * (leg.strike - final_value).max(0.0);
            }
        }
        total
    }
}

impl InnerProblem for BarrierPortfolioProblem {
    fn sample(&self, scenario: &OuterScenario, rng: &mut ChaCha8Rng) -> Result<(f64, WeightInput)> {
        let (min, final_value) = simulate_min_final(
            scenario.value,
            self.params.r,
            self.params.sigma,
            self.grid.inner_horizon(),
            rng,
        )?;
        Ok((self.discounted_book_payoff(min, final_value), WeightInput::MinFinal {
            min,
            final_value,
        }))
    }

    fn pair_weight(&self, reference: &OuterScenario, target: &OuterScenario) -> Result<PairWeight> {
        PairWeight::barrier_joint(
            &self.params,
            self.grid.inner_horizon(),
            reference.value,
            target.value,
        )
    }

    fn sample_binning_values(
        &self,
        scenario: &OuterScenario,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        // Binned reweighting for this book works on the final price alone.
        if !(scenario.value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scenario must be positive, got {}",
                scenario.value
            )));
        }
        let horizon = self.grid.inner_horizon();
        let mean = (self.params.r - 0.5 * self.params.sigma * self.params.sigma) * horizon;
        let sd = self.params.sigma * horizon.sqrt();
        Ok((0..count)
            .map(|_| scenario.value * (mean + sd * draw_standard_normal(rng)).exp())
            .collect())
    }

    fn loss_offset(&self, _scenario: &OuterScenario) -> f64 {
        -self.net_purchase
    }
}

/// Short position in average-price calls on one lognormal asset. The
/// averaging dates are the inner grid dates strictly after the risk
/// horizon; the loss contribution is the conditional expected discounted
/// payoff times the (positive) contract count. Purchase premiums are
/// handled at the portfolio level, not per asset.
#[derive(Clone, Debug)]
pub struct AsianAssetProblem {
    params: GbmParams,
    grid: TimeGrid,
    model: Model,
    strike: f64,
    contracts: f64,
    discount: f64,
}

impl AsianAssetProblem {
    pub fn new(params: GbmParams, grid: TimeGrid, strike: f64, contracts: f64) -> Result<Self> {
        if !(strike > 0.0) {
            return Err(Error::InvalidParameter(format!("strike must be positive, got {strike}")));
        }
        if !(contracts > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "contract count must be positive, got {contracts}"
            )));
        }
        let discount = (-params.r * grid.inner_horizon()).exp();
        let model = Model::Gbm(params.clone());
        Ok(AsianAssetProblem { params, grid, model, strike, contracts, discount })
    }
}

impl InnerProblem for AsianAssetProblem {
    fn sample(&self, scenario: &OuterScenario, rng: &mut ChaCha8Rng) -> Result<(f64, WeightInput)> {
        let mut sum = KahanSum::new();
        let first = models::walk_inner_path(&self.model, scenario, &self.grid, rng, |v| {
            sum.add(v);
        })?;
        let average = sum.total() / self.grid.inner_steps() as f64;
        let payoff = self.contracts * self.discount * (average - self.strike).max(0.0);
        Ok((payoff, WeightInput::FirstStep(first.raw_value)))
    }

    fn pair_weight(&self, reference: &OuterScenario, target: &OuterScenario) -> Result<PairWeight> {
        PairWeight::gbm(&self.params, self.grid.dt(), reference.value, target.value)
    }

    fn sample_binning_values(
        &self,
        scenario: &OuterScenario,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        if !(scenario.value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scenario must be positive, got {}",
                scenario.value
            )));
        }
        let dt = self.grid.dt();
        let mean = (self.params.r - 0.5 * self.params.sigma * self.params.sigma) * dt;
        let sd = self.params.sigma * dt.sqrt();
        Ok((0..count)
            .map(|_| scenario.value * (mean + sd * draw_standard_normal(rng)).exp())
            .collect())
    }
}

/// Insurer liability of a guaranteed-withdrawal contract between the risk
/// horizon and contract maturity: while the fund is depleted the insurer
/// pays the withdrawal rate out of pocket; while it is funded the insurer
/// collects the proportional fee. Accrual is a left-endpoint sum over the
/// inner grid, discounted to the horizon.
#[derive(Clone, Debug)]
pub struct GmwbProblem {
    params: GmwbParams,
    grid: TimeGrid,
    model: Model,
}

impl GmwbProblem {
    pub fn new(params: GmwbParams, grid: TimeGrid) -> Result<Self> {
        let contract_maturity = params.maturity();
        if (grid.maturity() - contract_maturity).abs() > 1e-9 * contract_maturity.max(1.0) {
            return Err(Error::GridMisaligned(format!(
                "grid maturity {} does not match the contract maturity {}",
                grid.maturity(),
                contract_maturity
            )));
        }
        let model = Model::Gmwb(params.clone());
        Ok(GmwbProblem { params, grid, model })
    }

    /// One accrual term: discounted cash flow rate at `steps_after` grid
    /// steps past the horizon, at fund value `state`.
    fn accrual(&self, steps_after: usize, state: f64) -> f64 {
        let dt = self.grid.dt();
        let discount = (-self.params.r * steps_after as f64 * dt).exp();
        let rate = if state <= 0.0 { self.params.w } else { -self.params.m_f * state };
        discount * rate * dt
    }

    /// Liability of a scenario whose fund is already depleted: the full
    /// guaranteed stream, a discrete discounted annuity.
    pub fn certain_liability(&self) -> f64 {
        let mut sum = KahanSum::new();
        for h in 0..self.grid.inner_steps() {
            sum.add(self.accrual(h, 0.0));
        }
        sum.total()
    }
}

impl InnerProblem for GmwbProblem {
    fn sample(&self, scenario: &OuterScenario, rng: &mut ChaCha8Rng) -> Result<(f64, WeightInput)> {
        let steps = self.grid.inner_steps();
        let mut liability = KahanSum::new();
        // Left endpoints run from the horizon itself to the grid date
        // before maturity: the scenario value plus the first steps-1
        // visited states.
        liability.add(self.accrual(0, scenario.value.max(0.0)));
        let mut visited = 0usize;
        let first = models::walk_inner_path(&self.model, scenario, &self.grid, rng, |v| {
            visited += 1;
            if visited < steps {
                liability.add(self.accrual(visited, v));
            }
        })?;
        Ok((liability.total(), WeightInput::FirstStep(first.raw_value)))
    }

    fn pair_weight(&self, reference: &OuterScenario, target: &OuterScenario) -> Result<PairWeight> {
        PairWeight::gmwb(&self.params, self.grid.dt(), reference.value, target.value)
    }

    fn sample_binning_values(
        &self,
        scenario: &OuterScenario,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        // Raw (pre-absorption) one-step fund values, matching the scale of
        // the recorded first-step inputs. A depleted fund stays at zero.
        if scenario.value <= 0.0 {
            return Ok(vec![0.0; count]);
        }
        Ok((0..count)
            .map(|_| {
                models::gmwb_raw_step(&self.params, scenario.value, self.params.r, self.grid.dt(), rng)
            })
            .collect())
    }

    fn requires_self_reference(&self, scenario: &OuterScenario) -> bool {
        scenario.value <= 0.0
    }
}

/// Single European put on a lognormal asset, valued over the remaining
/// horizon in one step. Small enough that its estimate can be checked
/// against the closed-form price.
#[derive(Clone, Debug)]
pub struct EuropeanPutProblem {
    params: GbmParams,
    horizon: f64,
    strike: f64,
    discount: f64,
}

impl EuropeanPutProblem {
    pub fn new(params: GbmParams, horizon: f64, strike: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if !(strike > 0.0) {
            return Err(Error::InvalidParameter(format!("strike must be positive, got {strike}")));
        }
        let discount = (-params.r * horizon).exp();
        Ok(EuropeanPutProblem { params, horizon, strike, discount })
    }
}

impl InnerProblem for EuropeanPutProblem {
    fn sample(&self, scenario: &OuterScenario, rng: &mut ChaCha8Rng) -> Result<(f64, WeightInput)> {
        if !(scenario.value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scenario must be positive, got {}",
                scenario.value
            )));
        }
        let mean = (self.params.r - 0.5 * self.params.sigma * self.params.sigma) * self.horizon;
        let sd = self.params.sigma * self.horizon.sqrt();
        let final_value = scenario.value * (mean + sd * draw_standard_normal(rng)).exp();
        let payoff = self.discount * (self.strike - final_value).max(0.0);
        Ok((payoff, WeightInput::FirstStep(final_value)))
    }

    fn pair_weight(&self, reference: &OuterScenario, target: &OuterScenario) -> Result<PairWeight> {
        PairWeight::gbm(&self.params, self.horizon, reference.value, target.value)
    }

    fn sample_binning_values(
        &self,
        scenario: &OuterScenario,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        (0..count).map(|_| self.sample(scenario, rng).map(|(_, wi)| wi.binning_value())).collect()
    }
}

/// Closed-form European put price.
pub fn black_scholes_put(spot: f64, strike: f64, r: f64, sigma: f64, t: f64) -> f64 {
    use crate::math::normal_cdf;
    if sigma <= 0.0 || t <= 0.0 {
        return (-r * t).exp() * (strike - spot * (r * t).exp()).max(0.0);
    }
    let st = sigma * t.sqrt();
    let d1 = ((spot / strike).ln() + (r + 0.5 * sigma * sigma) * t) / st;
    let d2 = d1 - st;
    strike * (-r * t).exp() * normal_cdf(-d2) - spot * normal_cdf(-d1)
}

/// Number of independent path chunks used by the time-zero pricing runs;
/// fixing it makes the result independent of thread count.
const PRICING_CHUNKS: u64 = 256;

/// Time-zero prices of the barrier legs under the pricing measure, by
/// plain Monte Carlo: an exact draw of the price at the risk horizon,
/// then an exact (minimum, final) draw over the remaining life, fully
/// discounted from maturity.
pub fn barrier_purchase_prices(
    params: &GbmParams,
    grid: &TimeGrid,
    legs: &[BarrierLeg],
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if legs.is_empty() || paths == 0 {
        return Err(Error::InvalidParameter("need at least one leg and one path".into()));
    }
    let tau = grid.tau();
    let horizon = grid.inner_horizon();
    let discount = (-params.r * grid.maturity()).exp();
    let mean_tau = (params.r - 0.5 * params.sigma * params.sigma) * tau;
    let sd_tau = params.sigma * tau.sqrt();
    let chunks = PRICING_CHUNKS.min(paths as u64);
    let base = paths as u64 / chunks;
    let rem = paths as u64 % chunks;
    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut rng = stream(seed, StreamKind::Oracle, ORACLE_TRIAL_PRICING, c);
            let count = base + u64::from(c < rem);
            let mut sums = vec![KahanSum::new(); legs.len()];
            for _ in 0..count {
                let x_tau = params.f0 * (mean_tau + sd_tau * draw_standard_normal(&mut rng)).exp();
                let (min, final_value) =
                    simulate_min_final(x_tau, params.r, params.sigma, horizon, &mut rng)?;
                for (leg, sum) in legs.iter().zip(&mut sums) {
                    if min > leg.barrier {
                        sum.add((leg.strike - final_value).max(0.0));
                    }
                }
            }
            Ok(sums.into_iter().map(|s| s.total()).collect())
        })
        .collect::<Result<_>>()?;
    let mut totals = vec![KahanSum::new(); legs.len()];
    for chunk in &partial {
        for (t, &v) in totals.iter_mut().zip(chunk) {
            t.add(v);
        }
    }
    Ok(totals.into_iter().map(|t| discount * t.total() / paths as f64).collect())
}

/// Time-zero premium of the whole basket of average-price calls: assets
/// are independent and identical, so one asset is priced and scaled.
/// Fully discounted from maturity; averaging dates are the inner grid
/// dates after the risk horizon.
pub fn asian_basket_premium(
    params: &GbmParams,
    grid: &TimeGrid,
    strike: f64,
    contracts: f64,
    assets: usize,
    paths: usize,
    seed: u64,
) -> Result<f64> {
    if paths == 0 || assets == 0 {
        return Err(Error::InvalidParameter("need at least one asset and one path".into()));
    }
    let tau = grid.tau();
    let dt = grid.dt();
    let steps = grid.inner_steps();
    let discount = (-params.r * grid.maturity()).exp();
    let mean_tau = (params.r - 0.5 * params.sigma * params.sigma) * tau;
    let sd_tau = params.sigma * tau.sqrt();
    let mean_dt = (params.r - 0.5 * params.sigma * params.sigma) * dt;
    let sd_dt = params.sigma * dt.sqrt();
    let chunks = PRICING_CHUNKS.min(paths as u64);
    let base = paths as u64 / chunks;
    let rem = paths as u64 % chunks;
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, StreamKind::Oracle, ORACLE_TRIAL_PRICING, chunks + c);
            let count = base + u64::from(c < rem);
            let mut sum = KahanSum::new();
            for _ in 0..count {
                let mut state =
                    params.f0 * (mean_tau + sd_tau * draw_standard_normal(&mut rng)).exp();
                let mut running = KahanSum::new();
                for _ in 0..steps {
                    state *= (mean_dt + sd_dt * draw_standard_normal(&mut rng)).exp();
                    running.add(state);
                }
                let average = running.total() / steps as f64;
                sum.add((average - strike).max(0.0));
            }
            sum.total()
        })
        .collect();
    let mut total = KahanSum::new();
    for v in &partial {
        total.add(*v);
    }
    Ok(assets as f64 * contracts * discount * total.total() / paths as f64)
}

/// A loss curve tabulated on a scenario-value grid by brute force, with
/// per-point standard errors. Queries between nodes interpolate linearly;
/// queries outside the grid clamp to the end losses.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCurve {
    pub values: Vec<f64>,
    pub losses: Vec<f64>,
    pub standard_errors: Vec<f64>,
}

impl OracleCurve {
    pub fn interpolate(&self, x: f64) -> f64 {
        let v = &self.values;
        if x <= v[0] {
            return self.losses[0];
        }
        if x >= v[v.len() - 1] {
            return self.losses[v.len() - 1];
        }
        let hi = v.partition_point(|&b| b < x).max(1);
        let lo = hi - 1;
        let t = (x - v[lo]) / (v[hi] - v[lo]);
        self.losses[lo] + t * (self.losses[hi] - self.losses[lo])
    }

    pub fn max_standard_error(&self) -> f64 {
        self.standard_errors.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario_value,loss,standard_error\n");
        for i in 0..self.values.len() {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e}\n",
                self.values[i], self.losses[i], self.standard_errors[i]
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut losses = Vec::new();
        let mut ses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                if line.trim() != "scenario_value,loss,standard_error" {
                    return Err(Error::Config(format!("unexpected oracle header: {line}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Config(format!("bad oracle row: {line}")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {s}: {e}")))
            };
            values.push(parse(fields[0])?);
            losses.push(parse(fields[1])?);
            ses.push(parse(fields[2])?);
        }
        let curve = OracleCurve { values, losses, standard_errors: ses };
        curve.validate()?;
        Ok(curve)
    }

    fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::Config("oracle curve needs at least two nodes".into()));
        }
        if self.values.len() != self.losses.len() || self.values.len() != self.standard_errors.len()
        {
            return Err(Error::Config("oracle curve columns differ in length".into()));
        }
        if !self.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("oracle curve nodes must strictly increase".into()));
        }
        Ok(())
    }
}

/// Brute-force the loss curve of a problem on a grid of scenario values:
/// a large fresh inner batch per node, on dedicated oracle streams.
pub fn build_oracle_curve(
    problem: &impl InnerProblem,
    values: &[f64],
    m: usize,
    seed: u64,
) -> Result<OracleCurve> {
    if values.len() < 2 || m < 2 {
        return Err(Error::InvalidParameter(
            "oracle build needs at least two nodes and two paths".into(),
        ));
    }
    if !values.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter("oracle nodes must strictly increase".into()));
    }
    let rows: Vec<(f64, f64)> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| -> Result<(f64, f64)> {
            let scenario = OuterScenario::plain(v);
            let mut rng = stream(seed, StreamKind::Oracle, ORACLE_TRIAL_CURVE, i as u64);
            let mut payoffs = Vec::with_capacity(m);
            for _ in 0..m {
                payoffs.push(problem.sample(&scenario, &mut rng)?.0);
            }
            let (mean, var) = mean_and_variance(&payoffs);
            Ok((mean + problem.loss_offset(&scenario), (var / m as f64).sqrt()))
        })
        .collect::<Result<_>>()?;
    Ok(OracleCurve {
        values: values.to_vec(),
        losses: rows.iter().map(|r| r.0).collect(),
        standard_errors: rows.iter().map(|r| r.1).collect(),
    })
}

/// Fetch a cached oracle curve, or build it and cache it. The returned
/// curve is always the round-trip through the serialized file, so the
/// first (building) run and every later (reading) run see identical
/// numbers.
pub fn cached_oracle_curve<F>(dir: &Path, key: &str, build: F) -> Result<OracleCurve>
where
    F: FnOnce() -> Result<OracleCurve>,
{
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::Config(format!(
            "cache key must be nonempty [A-Za-z0-9_-], got {key:?}"
        )));
    }
    let path = dir.join(format!("{key}.csv"));
    if path.exists() {
        return OracleCurve::from_csv(&fs::read_to_string(&path)?);
    }
    let curve = build()?;
    let text = curve.to_csv();
    fs::create_dir_all(dir)?;
    fs::write(&path, &text)?;
    OracleCurve::from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::math::normal_cdf;

    fn barrier_params() -> GbmParams {
        GbmParams { f0: 100.0, mu: 0.08, r: 0.03, sigma: 0.2 }
    }

    fn barrier_grid() -> TimeGrid {
        // Horizon one week, maturity one month, on a common weekly/3 grid.
        TimeGrid::new(1.0 / 52.0, 1.0 / 12.0, 1.0 / 156.0).unwrap()
    }

    fn experiment_legs() -> Vec<BarrierLeg> {
        vec![
            BarrierLeg { strike: 101.0, barrier: 91.0, position: Position::Long },
            BarrierLeg { strike: 110.0, barrier: 100.0, position: Position::Long },
            BarrierLeg { strike: 114.5, barrier: 104.5, position: Position::Short },
        ]
    }

    #[test]
    fn min_final_with_zero_volatility_is_the_deterministic_growth_path() {
        let mut rng = stream(9, StreamKind::Inner, 0, 0);
        let horizon = 0.25;
        let (min, final_value) = simulate_min_final(80.0, 0.05, 0.0, horizon, &mut rng).unwrap();
        let expected = 80.0 * (0.05f64 * horizon).exp();
        assert!((final_value - expected).abs() < 1e-12);
        // Positive drift: the running minimum is the starting point.
        assert!((min - 80.0).abs() < 1e-12);
        let (min_down, final_down) = simulate_min_final(80.0, -0.05, 0.0, horizon, &mut rng).unwrap();
        let expected_down = 80.0 * (-0.05f64 * horizon).exp();
        assert!((final_down - expected_down).abs() < 1e-12);
        // Negative drift: the minimum is the endpoint.
        assert!((min_down - expected_down).abs() < 1e-12);
    }

    #[test]
    fn running_minimum_stays_between_zero_and_both_endpoints() {
        let mut rng = stream(10, StreamKind::Inner, 0, 0);
        for _ in 0..2000 {
            let (min, final_value) =
                simulate_min_final(100.0, 0.03, 0.2, 1.0 / 13.0, &mut rng).unwrap();
            assert!(min > 0.0);
            assert!(min <= 100.0 + 1e-12);
            assert!(min <= final_value + 1e-12);
        }
    }

    #[test]
    fn hitting_probability_matches_the_reflection_formula() {
        // P(min <= h) for a lognormal path has a closed form by the
        // reflection principle; the sampler must agree within Monte Carlo
        // error (three binomial standard errors).
        let (x, h, r, sigma, horizon): (f64, f64, f64, f64, f64) =
            (100.0, 95.0, 0.03, 0.2, 1.0 / 12.0);
        let nu = r - 0.5 * sigma * sigma;
        let a = (h / x).ln();
        let st = sigma * horizon.sqrt();
        let p_true = normal_cdf((a - nu * horizon) / st)
            + (2.0 * nu * a / (sigma * sigma)).exp() * normal_cdf((a + nu * horizon) / st);
        let m = 200_000;
        let mut rng = stream(11, StreamKind::Inner, 0, 0);
        let mut hits = 0usize;
        for _ in 0..m {
            let (min, _) = simulate_min_final(x, r, sigma, horizon, &mut rng).unwrap();
            if min <= h {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / m as f64;
        let se = (p_true * (1.0 - p_true) / m as f64).sqrt();
        assert!(
            (p_hat - p_true).abs() <= 3.0 * se,
            "p_hat {p_hat} vs p_true {p_true} (se {se})"
        );
    }

    #[test]
    fn book_payoff_matches_a_hand_computation() {
        let problem = BarrierPortfolioProblem::new(
            barrier_params(),
            barrier_grid(),
            experiment_legs(),
            vec![0.0; 3],
        )
        .unwrap();
        let disc = (-0.03f64 * barrier_grid().inner_horizon()).exp();
        // Minimum 95 knocks out the 100- and 104.5-barrier legs; final 100
        // leaves one unit of intrinsic value on the 101 strike (long).
        let v1 = problem.discounted_book_payoff(95.0, 100.0);
        assert!((v1 - (-disc)).abs() < 1e-12, "got {v1}");
        // Minimum 105 keeps all three alive; final 103 pays 0, 7, 11.5.
        let v2 = problem.discounted_book_payoff(105.0, 103.0);
        assert!((v2 - disc * (-7.0 + 11.5)).abs() < 1e-12, "got {v2}");
    }

    #[test]
    fn book_loss_offset_is_the_signed_purchase_total() {
        let problem = BarrierPortfolioProblem::new(
            barrier_params(),
            barrier_grid(),
            experiment_legs(),
            vec![1.25, 8.0, 11.0],
        )
        .unwrap();
        // Long legs were bought (losses fall with value), short leg sold.
        let expected = -(-1.25 - 8.0 + 11.0);
        assert!((problem.loss_offset(&OuterScenario::plain(100.0)) - expected).abs() < 1e-15);
    }

    #[test]
    fn european_put_estimate_is_unbiased_for_the_closed_form() {
        let params = barrier_params();
        let horizon = 1.0 / 12.0;
        let problem = EuropeanPutProblem::new(params.clone(), horizon, 105.0).unwrap();
        let scenario = OuterScenario::plain(100.0);
        let m = 200_000;
        let mut rng = stream(12, StreamKind::Inner, 0, 0);
        let mut payoffs = Vec::with_capacity(m);
        for _ in 0..m {
            payoffs.push(problem.sample(&scenario, &mut rng).unwrap().0);
        }
        let (mean, var) = mean_and_variance(&payoffs);
        let se = (var / m as f64).sqrt();
        let truth = black_scholes_put(100.0, 105.0, params.r, params.sigma, horizon);
        assert!((mean - truth).abs() <= 3.0 * se, "mean {mean} vs {truth} (se {se})");
    }

    #[test]
    fn asian_value_with_zero_volatility_is_the_deterministic_average() {
        let params = GbmParams { f0: 100.0, mu: 0.08, r: 0.035, sigma: 0.0 };
        let grid = TimeGrid::new(1.0 / 52.0, 1.0 / 12.0, 1.0 / 624.0).unwrap();
        let problem = AsianAssetProblem::new(params, grid.clone(), 100.0, 10.0).unwrap();
        let scenario = OuterScenario::plain(102.0);
        let mut rng = stream(13, StreamKind::Inner, 0, 0);
        let (payoff, _) = problem.sample(&scenario, &mut rng).unwrap();
        let mut avg = 0.0;
        for j in 1..=grid.inner_steps() {
            avg += 102.0 * (0.035f64 * j as f64 * grid.dt()).exp();
        }
        avg /= grid.inner_steps() as f64;
        let expected = 10.0 * (-0.035f64 * grid.inner_horizon()).exp() * (avg - 100.0).max(0.0);
        assert!((payoff - expected).abs() < 1e-10, "payoff {payoff} vs {expected}");
    }

    fn gmwb_problem() -> GmwbProblem {
        let params = GmwbParams {
            g: 1.0,
            w: 0.1,
            m_f: 0.01,
            r: 0.05,
            mu: 0.08,
            sigma: 0.2,
        };
        let grid = TimeGrid::new(5.0, 10.0, 0.05).unwrap();
        GmwbProblem::new(params, grid).unwrap()
    }

    #[test]
    fn absorbed_scenario_reproduces_the_certain_liability_exactly() {
        let problem = gmwb_problem();
        let scenario = OuterScenario::plain(0.0);
        let mut rng = stream(14, StreamKind::Inner, 0, 0);
        let certain = problem.certain_liability();
        for _ in 0..5 {
            let (liability, wi) = problem.sample(&scenario, &mut rng).unwrap();
            assert_eq!(liability, certain);
            assert_eq!(wi.binning_value(), 0.0);
        }
        assert!(problem.requires_self_reference(&scenario));
        assert!(!problem.requires_self_reference(&OuterScenario::plain(0.5)));
    }

    #[test]
    fn certain_liability_approaches_the_continuous_annuity() {
        let problem = gmwb_problem();
        // Continuous-time value of paying at rate w over the remaining
        // five years: w (1 - e^{-r (T - tau)}) / r.
        let annuity = 0.1 * (1.0 - (-0.05f64 * 5.0).exp()) / 0.05;
        let discrete = problem.certain_liability();
        assert!(
            (discrete - annuity).abs() / annuity < 5e-3,
            "discrete {discrete} vs continuous {annuity}"
        );
    }

    #[test]
    fn liability_never_rises_when_the_starting_fund_is_higher() {
        let problem = gmwb_problem();
        let lo = OuterScenario::plain(0.6);
        let hi = OuterScenario::plain(1.0);
        let base = stream(15, StreamKind::Inner, 0, 0);
        for path in 0..200 {
            let mut rng_lo = base.clone();
            let mut rng_hi = base.clone();
            // Burn the same number of paths on both clones so each
            // comparison uses a fresh common stretch of the stream.
            for _ in 0..path {
                problem.sample(&lo, &mut rng_lo).unwrap();
                problem.sample(&hi, &mut rng_hi).unwrap();
            }
            let (l_lo, _) = problem.sample(&lo, &mut rng_lo).unwrap();
            let (l_hi, _) = problem.sample(&hi, &mut rng_hi).unwrap();
            assert!(
                l_lo >= l_hi - 1e-12,
                "path {path}: liability {l_lo} from fund 0.6 vs {l_hi} from fund 1.0"
            );
        }
    }

    #[test]
    fn purchase_prices_with_zero_volatility_are_deterministic() {
        let params = GbmParams { f0: 100.0, mu: 0.08, r: 0.03, sigma: 0.0 };
        let grid = barrier_grid();
        let legs = experiment_legs();
        let prices = barrier_purchase_prices(&params, &grid, &legs, 1000, 21).unwrap();
        // The path grows deterministically, so the minimum over the
        // remaining life is the horizon value and never hits any barrier
        // below it.
        let f_tau = 100.0 * (0.03f64 * grid.tau()).exp();
        let f_t = 100.0 * (0.03f64 * grid.maturity()).exp();
        let disc = (-0.03f64 * grid.maturity()).exp();
        for (leg, price) in legs.iter().zip(&prices) {
            let alive = f_tau.min(f_t) > leg.barrier;
            let expected = if alive { disc * (leg.strike - f_t).max(0.0) } else { 0.0 };
            assert!((price - expected).abs() < 1e-10, "leg {leg:?}: {price} vs {expected}");
        }
    }

    #[test]
    fn oracle_curve_interpolates_linearly_and_clamps_the_ends() {
        let curve = OracleCurve {
            values: vec![1.0, 2.0, 4.0],
            losses: vec![10.0, 20.0, 0.0],
            standard_errors: vec![0.0; 3],
        };
        assert_eq!(curve.interpolate(1.0), 10.0);
        assert_eq!(curve.interpolate(1.5), 15.0);
        assert_eq!(curve.interpolate(3.0), 10.0);
        assert_eq!(curve.interpolate(0.0), 10.0);
        assert_eq!(curve.interpolate(9.0), 0.0);
    }

    #[test]
    fn oracle_cache_builds_once_and_round_trips_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut builds = 0;
        let make = |builds: &mut i32| {
            *builds += 1;
            Ok(OracleCurve {
                values: vec![1.0, 2.0],
                losses: vec![0.125, 0.25],
                standard_errors: vec![1e-3, 2e-3],
            })
        };
        let first = cached_oracle_curve(dir.path(), "toy_curve", || make(&mut builds)).unwrap();
        let second = cached_oracle_curve(dir.path(), "toy_curve", || make(&mut builds)).unwrap();
        assert_eq!(builds, 1, "second call must hit the cache");
        assert_eq!(first, second);
        let bad = cached_oracle_curve(dir.path(), "no/slashes", || make(&mut builds));
        assert!(bad.is_err());
    }

    #[test]
    fn oracle_build_matches_the_closed_form_put_curve() {
        let params = barrier_params();
        let horizon = 1.0 / 12.0;
        let problem = EuropeanPutProblem::new(params.clone(), horizon, 105.0).unwrap();
        let values = vec![95.0, 100.0, 105.0];
        let curve = build_oracle_curve(&problem, &values, 40_000, 22).unwrap();
        for (i, &v) in values.iter().enumerate() {
            let truth = black_scholes_put(v, 105.0, params.r, params.sigma, horizon);
            let se = curve.standard_errors[i];
            assert!(
                (curve.losses[i] - truth).abs() <= 3.5 * se,
                "node {v}: {} vs {truth} (se {se})",
                curve.losses[i]
            );
        }
    }
}
