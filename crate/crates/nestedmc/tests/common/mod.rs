//! Helpers shared by the integration suites.
//!
//! Each test binary compiles this module separately and uses its own
//! subset of the helpers, hence the crate-level dead-code allowance.
#![allow(dead_code)]

/// Coefficient of the one-sample Kolmogorov-Smirnov critical value at
/// significance 0.1%: reject when D > 1.9495 / sqrt(m). Each law is
/// tested once at m >= 1e5 under a pinned seed, so a pass/fail flip from
/// sampling noise is a per-mille event, while the defects the tests
/// guard against (wrong drift measure, missing volatility correction,
/// broken running-minimum inversion) push D over the bound by an order
/// of magnitude at this sample size.
pub const KS_COEFF_TENTH_PERCENT: f64 = 1.9495;

/// KS rejection threshold for a sample of size `m` at significance 0.1%.
pub fn ks_critical(m: usize) -> f64 {
    KS_COEFF_TENTH_PERCENT / (m as f64).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against the
/// continuous CDF `cdf`. Sorts the slice in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!samples.is_empty(), "ks_statistic needs at least one sample");
    samples.sort_by(|a, b| a.partial_cmp(b).expect("ks sample must not be NaN"));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Least-squares slope of ln(y) against ln(x); the diagnostic for
/// variance-vs-effort scaling laws.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "slope needs at least two points");
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Standard normal CDF re-exported under a test-local name so the
/// distribution suites read as formulas.
pub fn phi(x: f64) -> f64 {
    nestedmc::math::normal_cdf(x)
}

/// Joint survival of the continuous-path log running minimum and the log
/// terminal value of an arithmetic Brownian motion X_t = nu*t + sigma*W_t
/// on [0, horizon], both relative to the start:
///
///   S(y, x) = P(min X > y, X_T >= x),  y <= 0.
///
/// By the reflection principle, for x >= y,
///
///   P(min X <= y, X_T >= x) = exp(2*nu*y/sigma^2) * Phi((2y - x + nu*T)/(sigma*sqrt(T)))
///
/// and subtracting from the terminal tail P(X_T >= x) gives S. For
/// x < y the constraint X_T >= x is implied by min > y, so S(y, x) =
/// S(y, y). This derivation shares nothing with the sampler's bridge
/// inversion, which makes it a genuine second route to the same law.
pub fn min_final_survival(nu: f64, sigma: f64, horizon: f64, y: f64, x: f64) -> f64 {
    assert!(y <= 0.0, "the running minimum of a path from 0 is never positive");
    let x = x.max(y);
    let s = sigma * horizon.sqrt();
    let tail = phi((nu * horizon - x) / s);
    let crossed = (2.0 * nu * y / (sigma * sigma)).exp() * phi((2.0 * y - x + nu * horizon) / s);
    (tail - crossed).clamp(0.0, 1.0)
}

/// Marginal survival of the log running minimum: P(min X > y).
pub fn min_marginal_survival(nu: f64, sigma: f64, horizon: f64, y: f64) -> f64 {
    min_final_survival(nu, sigma, horizon, y, y)
}
