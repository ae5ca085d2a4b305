//! Stochastic model kernels.
//!
//! Each model simulates outer scenarios (the state of the risk factor at
//! the horizon, under the real-world measure) and inner paths from a given
//! scenario (under the pricing measure), and exposes its exact one-step
//! transition density — the ingredient the recycling weights are built
//! from.
//!
//! Conventions shared by all kernels:
//! - Simulation takes an explicit generator, so callers own the stream
//!   layout and may parallelize without shared state.
//! - A volatility of zero is accepted by the simulators (degenerate,
//!   deterministic paths) but rejected by the densities, which would not
//!   exist as functions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::math::{lognormal_density, normal_density, normal_pdf};

/// Geometric Brownian motion with distinct real-world and pricing drifts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmParams {
    /// Initial price.
    pub f0: f64,
    /// Real-world drift (outer scenarios).
    pub mu: f64,
    /// Risk-free rate (inner paths and discounting).
    pub r: f64,
    /// Volatility.
    pub sigma: f64,
}

/// Ornstein–Uhlenbeck short-rate model, simulated by its exact
/// autoregressive transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VasicekParams {
    /// Mean-reversion speed.
    pub kappa: f64,
    /// Long-run level.
    pub theta: f64,
    /// Instantaneous volatility.
    pub sigma: f64,
    /// Initial rate.
    pub f0: f64,
}

/// Two-state regime-switching lognormal returns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rsln2Params {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    /// Probability of switching 1 -> 2 over one step.
    pub p12: f64,
    /// Probability of switching 2 -> 1 over one step.
    pub p21: f64,
    /// Initial level.
    pub f0: f64,
    /// Initial regime, 1 or 2.
    pub s0: u8,
}

/// Fund account of a guaranteed-withdrawal contract: GBM with a
/// proportional fee and a constant withdrawal drain, absorbed at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmwbParams {
    /// Initial deposit; also the guaranteed total withdrawal base.
    pub g: f64,
    /// Withdrawal rate per year (currency).
    pub w: f64,
    /// Proportional fee rate per year.
    pub m_f: f64,
    /// Risk-free rate.
    pub r: f64,
    /// Real-world drift.
    pub mu: f64,
    /// Volatility.
    pub sigma: f64,
}

impl GmwbParams {
    /// Contract maturity: the time to pay out the full deposit.
    pub fn maturity(&self) -> f64 {
        self.g / self.w
    }
}

/// The synthetic one-step model used for variance analysis: the scenario
/// is uniform on [-1, 1] and the inner draw is normal with mean equal to
/// the negated scenario and unit variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyParams {}

/// A realized risk-factor state at the horizon. The regime is present only
/// for regime-switching models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterScenario {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<u8>,
}

impl OuterScenario {
    pub fn plain(value: f64) -> Self {
        OuterScenario { value, regime: None }
    }

    pub fn with_regime(value: f64, regime: u8) -> Self {
        OuterScenario { value, regime: Some(regime) }
    }
}

/// Information about the first inner transition of a simulated path — the
/// quantity recycling weights are evaluated at.
///
/// `raw_value` is the transition value before any state clamping (the
/// guaranteed-withdrawal recursion may step below zero before absorption;
/// the density lives on the raw value). `regime` is the first inner regime
/// for regime-switching models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstStep {
    pub raw_value: f64,
    pub regime: Option<u8>,
}

/// A stochastic model kernel. Static dispatch over the supported model
/// families keeps the simulation loops free of virtual calls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    Gbm(GbmParams),
    Vasicek(VasicekParams),
    Rsln2(Rsln2Params),
    Gmwb(GmwbParams),
    Toy(ToyParams),
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

impl Model {
    /// Check parameter-domain invariants. Simulators accept zero
    /// volatility (degenerate deterministic limit); densities check
    /// positivity separately.
    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Gbm(p) => {
                require(p.f0 > 0.0, || format!("gbm f0 must be positive, got {}", p.f0))?;
                require(p.sigma >= 0.0, || format!("gbm sigma must be nonnegative, got {}", p.sigma))
            }
            Model::Vasicek(p) => {
                require(p.kappa > 0.0, || format!("vasicek kappa must be positive, got {}", p.kappa))?;
                require(p.sigma >= 0.0, || {
                    format!("vasicek sigma must be nonnegative, got {}", p.sigma)
                })
            }
            Model::Rsln2(p) => {
                require(p.sigma1 > 0.0 && p.sigma2 > 0.0, || {
                    format!("regime volatilities must be positive, got {} and {}", p.sigma1, p.sigma2)
                })?;
                require((0.0..=1.0).contains(&p.p12) && (0.0..=1.0).contains(&p.p21), || {
                    format!("switch probabilities must lie in [0,1], got {} and {}", p.p12, p.p21)
                })?;
                require(p.f0 > 0.0, || format!("rsln2 f0 must be positive, got {}", p.f0))?;
                require(p.s0 == 1 || p.s0 == 2, || format!("initial regime must be 1 or 2, got {}", p.s0))
            }
            Model::Gmwb(p) => {
                require(p.g > 0.0, || format!("deposit must be positive, got {}", p.g))?;
                require(p.w > 0.0, || format!("withdrawal rate must be positive, got {}", p.w))?;
                require(p.m_f >= 0.0, || format!("fee rate must be nonnegative, got {}", p.m_f))?;
                require(p.sigma >= 0.0, || format!("gmwb sigma must be nonnegative, got {}", p.sigma))
            }
            Model::Toy(_) => Ok(()),
        }
    }

    /// The state the model starts from at time 0.
    pub fn initial_value(&self) -> f64 {
        match self {
            Model::Gbm(p) => p.f0,
            Model::Vasicek(p) => p.f0,
            Model::Rsln2(p) => p.f0,
            Model::Gmwb(p) => p.g,
            Model::Toy(_) => 0.0,
        }
    }

    fn is_toy(&self) -> bool {
        matches!(self, Model::Toy(_))
    }
}

fn draw_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One regime transition: draws the next regime from the current one.
fn step_regime(p: &Rsln2Params, regime: u8, rng: &mut ChaCha8Rng) -> u8 {
    let switch_prob = if regime == 1 { p.p12 } else { p.p21 };
    let u: f64 = rng.random();
    if u < switch_prob {
        3 - regime
    } else {
        regime
    }
}

/// One fund-account step of the withdrawal contract from a positive state,
/// before absorption is applied, driven by the standard normal `z`.
/// `drift` selects the measure.
pub(crate) fn gmwb_raw_step_from(p: &GmwbParams, state: f64, drift: f64, dt: f64, z: f64) -> f64 {
    let growth = ((drift - p.m_f - 0.5 * p.sigma * p.sigma) * dt + p.sigma * dt.sqrt() * z).exp();
    state * growth - p.w * dt
}

/// [`gmwb_raw_step_from`] with a freshly drawn variate.
pub(crate) fn gmwb_raw_step(
    p: &GmwbParams,
    state: f64,
    drift: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    gmwb_raw_step_from(p, state, drift, dt, draw_normal(rng))
}

/// Draw `n` i.i.d. risk-factor states at the horizon under the real-world
/// measure.
pub fn simulate_outer(
    model: &Model,
    grid: &TimeGrid,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<OuterScenario>> {
    model.validate()?;
    require(n >= 1, || "scenario count must be at least 1".to_string())?;
    let tau = grid.tau();
    let mut out = Vec::with_capacity(n);
    match model {
        Model::Gbm(p) => {
            let mean = (p.mu - 0.5 * p.sigma * p.sigma) * tau;
            let sd = p.sigma * tau.sqrt();
            for _ in 0..n {
                out.push(OuterScenario::plain(p.f0 * (mean + sd * draw_normal(rng)).exp()));
            }
        }
        Model::Vasicek(p) => {
            let decay = (-p.kappa * tau).exp();
            let mean = decay * p.f0 + p.theta * (1.0 - decay);
            let sd = p.sigma * ((1.0 - decay * decay) / (2.0 * p.kappa)).sqrt();
            for _ in 0..n {
                out.push(OuterScenario::plain(mean + sd * draw_normal(rng)));
            }
        }
        Model::Rsln2(p) => {
            for _ in 0..n {
                let mut value = p.f0;
                let mut regime = p.s0;
                for _ in 0..grid.outer_steps() {
                    regime = step_regime(p, regime, rng);
                    let (mu, sigma) = if regime == 1 { (p.mu1, p.sigma1) } else { (p.mu2, p.sigma2) };
                    value *= (mu * grid.dt() + sigma * grid.dt().sqrt() * draw_normal(rng)).exp();
                }
                out.push(OuterScenario::with_regime(value, regime));
            }
        }
        Model::Gmwb(p) => {
            for _ in 0..n {
                let mut state = p.g;
                for _ in 0..grid.outer_steps() {
                    if state <= 0.0 {
                        state = 0.0;
                        break;
                    }
                    state = gmwb_raw_step(p, state, p.mu, grid.dt(), rng);
                }
                out.push(OuterScenario::plain(state.max(0.0)));
            }
        }
        Model::Toy(_) => {
            for _ in 0..n {
                out.push(OuterScenario::plain(rng.random_range(-1.0..1.0)));
            }
        }
    }
    Ok(out)
}

/// Walk one inner path from `scenario`, calling `visit` with each
/// post-horizon grid value in order, and return the first-transition
/// record. This is the allocation-free core the estimators build on.
pub fn walk_inner_path<V: FnMut(f64)>(
    model: &Model,
    scenario: &OuterScenario,
    grid: &TimeGrid,
    rng: &mut ChaCha8Rng,
    mut visit: V,
) -> Result<FirstStep> {
    let steps = grid.inner_steps();
    let dt = grid.dt();
    match model {
        Model::Gbm(p) => {
            let drift = (p.r - 0.5 * p.sigma * p.sigma) * dt;
            let sd = p.sigma * dt.sqrt();
            let mut state = scenario.value;
            require(state > 0.0, || format!("gbm scenario must be positive, got {state}"))?;
            let mut first = f64::NAN;
            for h in 0..steps {
                state *= (drift + sd * draw_normal(rng)).exp();
                if h == 0 {
                    first = state;
                }
                visit(state);
            }
            Ok(FirstStep { raw_value: first, regime: None })
        }
        Model::Vasicek(p) => {
            let decay = (-p.kappa * dt).exp();
            let level = p.theta * (1.0 - decay);
            let sd = p.sigma * ((1.0 - decay * decay) / (2.0 * p.kappa)).sqrt();
            let mut state = scenario.value;
            let mut first = f64::NAN;
            for h in 0..steps {
                state = decay * state + level + sd * draw_normal(rng);
                if h == 0 {
                    first = state;
                }
                visit(state);
            }
            Ok(FirstStep { raw_value: first, regime: None })
        }
        Model::Rsln2(p) => {
            let mut state = scenario.value;
            require(state > 0.0, || format!("rsln2 scenario must be positive, got {state}"))?;
            let mut regime = scenario.regime.ok_or_else(|| {
                Error::InvalidParameter("rsln2 scenario must carry its regime".to_string())
            })?;
            require(regime == 1 || regime == 2, || format!("scenario regime must be 1 or 2, got {regime}"))?;
            let mut first = f64::NAN;
            let mut first_regime = regime;
            for h in 0..steps {
                regime = step_regime(p, regime, rng);
                let (mu, sigma) = if regime == 1 { (p.mu1, p.sigma1) } else { (p.mu2, p.sigma2) };
                state *= (mu * dt + sigma * dt.sqrt() * draw_normal(rng)).exp();
                if h == 0 {
                    first = state;
                    first_regime = regime;
                }
                visit(state);
            }
            Ok(FirstStep { raw_value: first, regime: Some(first_regime) })
        }
        Model::Gmwb(p) => {
            let mut state = scenario.value.max(0.0);
            let mut first = f64::NAN;
            for h in 0..steps {
                // One variate per step even when the account is already
                // absorbed: a sample's stream cost is then independent of
                // the path taken, so runs that share draws stay aligned
                // step for step.
                let z = draw_normal(rng);
                let raw =
                    if state > 0.0 { gmwb_raw_step_from(p, state, p.r, dt, z) } else { 0.0 };
                if h == 0 {
                    first = raw;
                }
                state = raw.max(0.0);
                visit(state);
            }
            Ok(FirstStep { raw_value: first, regime: None })
        }
        Model::Toy(_) => {
            require(steps == 1, || {
                format!("the toy model has a single inner transition; grid implies {steps} steps")
            })?;
            let z = -scenario.value + draw_normal(rng);
            visit(z);
            Ok(FirstStep { raw_value: z, regime: None })
        }
    }
}

/// Simulate `m` inner paths of grid values after the horizon, under the
/// pricing measure. Returns one row per path.
pub fn simulate_inner_paths(
    model: &Model,
    scenario: &OuterScenario,
    grid: &TimeGrid,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    require(m >= 1, || "path count must be at least 1".to_string())?;
    let mut paths = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row = Vec::with_capacity(grid.inner_steps());
        walk_inner_path(model, scenario, grid, rng, |v| row.push(v))?;
        paths.push(row);
    }
    Ok(paths)
}

/// Exact one-step transition density of the pricing-measure kernel, as a
/// function of the destination state `to` given the source state `from`.
///
/// For regime-switching models the density is with respect to Lebesgue
/// measure in the value times counting measure in the regime, so `to`
/// must carry a regime. Destinations outside the support return 0.
pub fn transition_density(
    model: &Model,
    from: &OuterScenario,
    to: &OuterScenario,
    dt: f64,
) -> Result<f64> {
    model.validate()?;
    if !model.is_toy() {
        require(dt > 0.0, || format!("dt must be positive, got {dt}"))?;
    }
    match model {
        Model::Gbm(p) => {
            require(p.sigma > 0.0, || "gbm density needs positive sigma".to_string())?;
            require(from.value > 0.0, || format!("gbm source must be positive, got {}", from.value))?;
            let log_mean = from.value.ln() + (p.r - 0.5 * p.sigma * p.sigma) * dt;
            Ok(lognormal_density(to.value, log_mean, p.sigma * dt.sqrt()))
        }
        Model::Vasicek(p) => {
            require(p.sigma > 0.0, || "vasicek density needs positive sigma".to_string())?;
            let decay = (-p.kappa * dt).exp();
            let mean = decay * from.value + p.theta * (1.0 - decay);
            let sd = p.sigma * ((1.0 - decay * decay) / (2.0 * p.kappa)).sqrt();
            Ok(normal_density(to.value, mean, sd))
        }
        Model::Rsln2(p) => {
            require(from.value > 0.0, || format!("rsln2 source must be positive, got {}", from.value))?;
            let from_regime = from.regime.ok_or_else(|| {
                Error::InvalidParameter("rsln2 source must carry its regime".to_string())
            })?;
            let to_regime = to.regime.ok_or_else(|| {
                Error::InvalidParameter("rsln2 destination must carry its regime".to_string())
            })?;
            require(from_regime == 1 || from_regime == 2, || {
                format!("source regime must be 1 or 2, got {from_regime}")
            })?;
            require(to_regime == 1 || to_regime == 2, || {
                format!("destination regime must be 1 or 2, got {to_regime}")
            })?;
            let switch = if from_regime == 1 { p.p12 } else { p.p21 };
            let regime_prob = if to_regime == from_regime { 1.0 - switch } else { switch };
            let (mu, sigma) = if to_regime == 1 { (p.mu1, p.sigma1) } else { (p.mu2, p.sigma2) };
            let log_mean = from.value.ln() + mu * dt;
            Ok(regime_prob * lognormal_density(to.value, log_mean, sigma * dt.sqrt()))
        }
        Model::Gmwb(p) => {
            require(p.sigma > 0.0, || "gmwb density needs positive sigma".to_string())?;
            require(from.value > 0.0, || {
                format!("gmwb one-step density needs a positive source, got {}", from.value)
            })?;
            let shifted = to.value + p.w * dt;
            if shifted <= 0.0 {
                return Ok(0.0);
            }
            let log_mean = from.value.ln() + (p.r - p.m_f - 0.5 * p.sigma * p.sigma) * dt;
            Ok(lognormal_density(shifted, log_mean, p.sigma * dt.sqrt()))
        }
        Model::Toy(_) => Ok(normal_pdf(to.value + from.value)),
    }
}
