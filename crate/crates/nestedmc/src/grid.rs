//! Simulation time grid with enforced alignment.
//!
//! Weight formulas use the step size exactly, so the risk horizon and the
//! maturity must land on grid points; the constructor rejects any other
//! configuration instead of silently rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when testing whether tau/dt and T/dt are integers.
const ALIGNMENT_TOL: f64 = 1e-9;

/// A uniform time grid on [0, T] that contains the risk horizon tau.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawTimeGrid", into = "RawTimeGrid")]
pub struct TimeGrid {
    tau: f64,
    maturity: f64,
    dt: f64,
    horizon_index: usize,
    maturity_index: usize,
}

/// Serialized form: just the three defining values; indices are re-derived
/// (and re-validated) on load.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTimeGrid {
    tau: f64,
    maturity: f64,
    dt: f64,
}

impl TryFrom<RawTimeGrid> for TimeGrid {
    type Error = Error;
    fn try_from(raw: RawTimeGrid) -> Result<Self> {
        TimeGrid::new(raw.tau, raw.maturity, raw.dt)
    }
}

impl From<TimeGrid> for RawTimeGrid {
    fn from(g: TimeGrid) -> Self {
        RawTimeGrid { tau: g.tau, maturity: g.maturity, dt: g.dt }
    }
}

fn aligned_index(value: f64, dt: f64, what: &str) -> Result<usize> {
    let ratio = value / dt;
    let index = ratio.round();
    if (ratio - index).abs() > ALIGNMENT_TOL * ratio.abs().max(1.0) {
        return Err(Error::GridMisaligned(format!(
            "{what} = {value} is not an integer multiple of dt = {dt} (ratio {ratio})"
        )));
    }
    Ok(index as usize)
}

impl TimeGrid {
    /// Build a grid with horizon `tau`, maturity `maturity`, step `dt`.
    ///
    /// Errors when 0 < tau < maturity fails, dt is not positive, or either
    /// of tau and maturity misses the grid.
    pub fn new(tau: f64, maturity: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(tau > 0.0 && tau < maturity) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < tau < maturity, got tau = {tau}, maturity = {maturity}"
            )));
        }
        let horizon_index = aligned_index(tau, dt, "tau")?;
        let maturity_index = aligned_index(maturity, dt, "maturity")?;
        if horizon_index == 0 || horizon_index >= maturity_index {
            return Err(Error::GridMisaligned(format!(
                "horizon index {horizon_index} must lie strictly between 0 and \
                 maturity index {maturity_index}"
            )));
        }
        Ok(TimeGrid { tau, maturity, dt, horizon_index, maturity_index })
    }

    /// Risk horizon tau.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Contract maturity T.
    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// Grid step.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Index of the grid point at tau.
    pub fn horizon_index(&self) -> usize {
        self.horizon_index
    }

    /// Index of the grid point at T.
    pub fn maturity_index(&self) -> usize {
        self.maturity_index
    }

    /// Number of steps from 0 to tau (outer-path length).
    pub fn outer_steps(&self) -> usize {
        self.horizon_index
    }

    /// Number of steps from tau to T (inner-path length).
    pub fn inner_steps(&self) -> usize {
        self.maturity_index - self.horizon_index
    }

    /// The remaining life T - tau.
    pub fn inner_horizon(&self) -> f64 {
        self.maturity - self.tau
    }
}
