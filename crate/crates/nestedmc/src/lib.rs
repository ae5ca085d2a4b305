//! Nested Monte Carlo risk estimation with sample-recycling inner loops.
//!
//! The crate estimates outer-stage risk measures of a portfolio loss
//! `L(F_tau)` when each loss value is itself a conditional expectation that
//! must be simulated. Four estimators are provided:
//!
//! * **Standard nested** simulation: a fresh inner sample per outer scenario.
//! * **Sample recycling**: inner samples are generated once per *reference*
//!   scenario and reused for every other scenario, with each recycled draw
//!   reweighted by the likelihood ratio (Radon–Nikodym derivative) of the
//!   target inner measure against the reference inner measure. For Markov
//!   models the ratio collapses to a one-step transition-density ratio, for
//!   which closed forms are implemented per model.
//! * **Non-parametric recycling**: the likelihood ratio is replaced by a
//!   binned empirical estimate built from first-step samples, for use when
//!   no model density is available.
//! * **Regression** (least-squares Monte Carlo) baseline.
//!
//! Model kernels (geometric Brownian motion, Vasicek, two-regime lognormal
//! switching, a GMWB account recursion, and a uniform/normal toy model used
//! by the variance analysis) live in [`models`]; likelihood-ratio evaluators
//! in [`weights`] and [`empirical`]; the estimators and reference-plan
//! machinery in [`engine`]; portfolio definitions and high-precision loss
//! oracles in [`payoffs`]; outer-stage risk functionals in [`risk`]; the
//! closed-form variance analysis of both estimators on the toy model in
//! [`analysis`]; and experiment orchestration, configuration, and report
//! output in [`harness`].
//!
//! Everything is deterministic given a master seed: random streams are
//! derived per (purpose, trial, unit) in [`rng`], so results do not depend
//! on thread scheduling.

pub mod analysis;
pub mod empirical;
pub mod engine;
pub mod error;
pub mod grid;
pub mod harness;
pub mod math;
pub mod models;
pub mod payoffs;
pub mod quadrature;
pub mod risk;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};
