//! Adaptive numerical integration in one, two, and three dimensions.
//!
//! The one-dimensional kernel is a Gauss–Kronrod 7–15 panel rule with
//! greedy bisection of the worst panel. Higher dimensions are iterated:
//! the outer rule integrates a closure that runs an inner integration at a
//! proportionally tighter tolerance, so the requested absolute tolerance
//! bounds the total error budget.

use crate::error::{Error, Result};

/// Kronrod abscissae for the 15-point rule on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_7,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Embedded 7-point Gauss weights (nodes are XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// Maximum number of panels before giving up on a 1-D integral.
const MAX_PANELS: usize = 4096;

struct Panel {
    a: f64,
    b: f64,
    estimate: f64,
    error: f64,
}

/// One Gauss–Kronrod 7–15 evaluation over [a, b]: returns the Kronrod
/// estimate and |Kronrod - Gauss| as the error proxy.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut kronrod = WGK[7] * f_center;
    let mut gauss = WG[3] * f_center;
    for j in 0..7 {
        let offset = half * XGK[j];
        let sum = f(center - offset) + f(center + offset);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Adaptive integral of `f` over [a, b] to absolute tolerance `tol`.
///
/// Bisects the panel with the largest error estimate until the summed
/// panel errors drop below `tol`; errors out if the panel budget is
/// exhausted first (non-convergence).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "quadrature tolerance must be positive, got {tol}"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let (estimate, error) = gk15(&mut f, a, b);
    let mut panels = vec![Panel { a, b, estimate, error }];
    loop {
        let total_error: f64 = panels.iter().map(|p| p.error).sum();
        if total_error <= tol {
            let mut sum = crate::math::KahanSum::new();
            for p in &panels {
                sum.add(p.estimate);
            }
            return Ok(sum.total());
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::QuadratureTolerance(format!(
                "integral did not reach tolerance {tol:.3e} within {MAX_PANELS} panels \
                 (remaining error estimate {total_error:.3e})"
            )));
        }
        // Split the worst panel (first of any ties, for determinism).
        let mut worst = 0;
        for (i, p) in panels.iter().enumerate() {
            if p.error > panels[worst].error {
                worst = i;
            }
        }
        let Panel { a, b, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (left_est, left_err) = gk15(&mut f, a, mid);
        let (right_est, right_err) = gk15(&mut f, mid, b);
        panels.push(Panel { a, b: mid, estimate: left_est, error: left_err });
        panels.push(Panel { a: mid, b, estimate: right_est, error: right_err });
    }
}

/// Adaptive 2-D integral of `f(x, y)` over [ax, bx] x [ay, by], absolute
/// tolerance `tol` split between the outer rule and the inner integrals.
pub fn integrate2<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
    tol: f64,
) -> Result<f64> {
    let inner_tol = 0.5 * tol / (bx - ax).abs().max(1.0);
    let mut inner_failure: Option<Error> = None;
    let outer = integrate(
        |x| match integrate(|y| f(x, y), ay, by, inner_tol) {
            Ok(v) => v,
            Err(e) => {
                if inner_failure.is_none() {
                    inner_failure = Some(e);
                }
                0.0
            }
        },
        ax,
        bx,
        0.5 * tol,
    );
    if let Some(e) = inner_failure {
        return Err(e);
    }
    outer
}

/// Adaptive 3-D integral of `f(x, y, z)` over a box, absolute tolerance
/// `tol` split across the iterated levels.
pub fn integrate3<F: FnMut(f64, f64, f64) -> f64>(
    mut f: F,
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
    az: f64,
    bz: f64,
    tol: f64,
) -> Result<f64> {
    let inner_tol = 0.5 * tol / (bx - ax).abs().max(1.0);
    let mut inner_failure: Option<Error> = None;
    let outer = integrate(
        |x| match integrate2(|y, z| f(x, y, z), ay, by, az, bz, inner_tol) {
            Ok(v) => v,
            Err(e) => {
                if inner_failure.is_none() {
                    inner_failure = Some(e);
                }
                0.0
            }
        },
        ax,
        bx,
        0.5 * tol,
    );
    if let Some(e) = inner_failure {
        return Err(e);
    }
    outer
}
