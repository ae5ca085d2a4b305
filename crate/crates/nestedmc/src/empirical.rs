//! Non-parametric likelihood-ratio estimation.
//!
//! Builds a piecewise-constant estimate of the density ratio between a
//! target and a reference distribution from equal-size samples of both:
//! bin the reference sample (by its own quantiles, or equidistantly),
//! count how many target draws land in each bin, and take the count
//! ratio per bin as the step value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How bin boundaries are placed over the reference sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// Boundaries at reference-sample quantiles: every bin holds the same
    /// number of reference points, so no bin can be empty. The default,
    /// and the variant under which the ratio simplifies to
    /// `l * n_a(target) / m`.
    #[default]
    Quantile,
    /// Equal-width bins over the reference range; reference bins may come
    /// out empty, which is an error.
    Equidistant,
}

/// What to do with target samples falling outside the reference range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRangePolicy {
    /// Count them into the nearest end bin (consistent with evaluation,
    /// which clamps). The default.
    #[default]
    ClampToEndBins,
    /// Drop them; the resulting step function then carries less than the
    /// full target mass.
    Drop,
}

/// A piecewise-constant likelihood-ratio function with `l` bins.
///
/// `breakpoints` holds the l+1 boundaries; interior bins are left-open
/// right-closed, and evaluation clamps to the end bins outside the range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRatio {
    breakpoints: Vec<f64>,
    ratios: Vec<f64>,
    m: usize,
}

impl EmpiricalRatio {
    /// Bin boundaries (length = bins + 1).
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Per-bin ratio values (length = bins).
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    /// Number of bins.
    pub fn bins(&self) -> usize {
        self.ratios.len()
    }

    /// Sample size each side was built from.
    pub fn sample_size(&self) -> usize {
        self.m
    }

    /// Step-function lookup with end clamping.
    pub fn evaluate(&self, y: f64) -> f64 {
        let inner = &self.breakpoints[1..self.breakpoints.len() - 1];
        // Smallest interior boundary >= y selects the bin; an exact hit on
        // a boundary belongs to the bin on its left (bins are (.,.]).
        let idx = inner.partition_point(|&b| b < y);
        self.ratios[idx]
    }

    /// Serialize as `breakpoint,ratio` lines: one line per bin, keyed by
    /// the bin's left boundary, plus a final line repeating the last
    /// ratio at the right edge so the step curve plots closed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("breakpoint,ratio\n");
        for (i, r) in self.ratios.iter().enumerate() {
            out.push_str(&format!("{:.12e},{:.12e}\n", self.breakpoints[i], r));
        }
        out.push_str(&format!(
            "{:.12e},{:.12e}\n",
            self.breakpoints[self.breakpoints.len() - 1],
            self.ratios[self.ratios.len() - 1]
        ));
        out
    }
}

/// Free-function form of [`EmpiricalRatio::evaluate`].
pub fn evaluate_empirical_ratio(ratio: &EmpiricalRatio, y: f64) -> f64 {
    ratio.evaluate(y)
}

/// Build the binned ratio of target-sample density to reference-sample
/// density. Both samples must have the same length m >= l >= 2.
pub fn build_empirical_ratio(
    ref_samples: &[f64],
    target_samples: &[f64],
    l: usize,
    partition: Partition,
    policy: OutOfRangePolicy,
) -> Result<EmpiricalRatio> {
    let m = ref_samples.len();
    if target_samples.len() != m {
        return Err(Error::InvalidParameter(format!(
            "reference and target sample sizes differ: {m} vs {}",
            target_samples.len()
        )));
    }
    if l < 1 || m < l {
        return Err(Error::InvalidParameter(format!(
            "need sample size >= bins >= 1, got m = {m}, l = {l}"
        )));
    }
    if ref_samples.iter().chain(target_samples).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".to_string()));
    }

    let mut sorted_ref = ref_samples.to_vec();
    sorted_ref.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));

    // Reference counts per bin and the l+1 boundary values.
    let mut breakpoints = Vec::with_capacity(l + 1);
    let mut ref_counts = vec![0usize; l];
    match partition {
        Partition::Quantile => {
            // Boundary a sits at the floor(a*m/l)-th order statistic; the
            // counts are rank differences, so they are equal (up to
            // rounding) by construction.
            breakpoints.push(sorted_ref[0]);
            let mut prev_rank = 0usize;
            for a in 1..=l {
                let rank = a * m / l;
                breakpoints.push(sorted_ref[rank - 1]);
                ref_counts[a - 1] = rank - prev_rank;
                prev_rank = rank;
            }
        }
        Partition::Equidistant => {
            let lo = sorted_ref[0];
            let hi = sorted_ref[m - 1];
            if hi <= lo {
                return Err(Error::InvalidParameter(
                    "reference sample has zero range".to_string(),
                ));
            }
            let width = (hi - lo) / l as f64;
            for a in 0..=l {
                breakpoints.push(if a == l { hi } else { lo + width * a as f64 });
            }
            for &v in &sorted_ref {
                ref_counts[bin_index(&breakpoints, v)] += 1;
            }
        }
    }
    for a in 1..breakpoints.len() {
        if breakpoints[a] <= breakpoints[a - 1] {
            return Err(Error::InvalidParameter(format!(
                "bin boundaries are not strictly increasing (tied sample values near {})",
                breakpoints[a]
            )));
        }
    }
    if let Some(bin) = ref_counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyReferenceBin { bin, total: l });
    }

    // Target counts by value, with the configured out-of-range policy.
    let lo = breakpoints[0];
    let hi = breakpoints[l];
    let mut target_counts = vec![0usize; l];
    for &v in target_samples {
        if v <= lo || v > hi {
            match policy {
                OutOfRangePolicy::ClampToEndBins => {
                    let bin = if v <= lo { 0 } else { l - 1 };
                    target_counts[bin] += 1;
                }
                OutOfRangePolicy::Drop => {}
            }
        } else {
            target_counts[bin_index(&breakpoints, v)] += 1;
        }
    }

    let ratios = target_counts
        .iter()
        .zip(&ref_counts)
        .map(|(&t, &r)| t as f64 / r as f64)
        .collect();
    Ok(EmpiricalRatio { breakpoints, ratios, m })
}

/// Bin index for an in-range value under the (.,.] interior convention.
fn bin_index(breakpoints: &[f64], v: f64) -> usize {
    let inner = &breakpoints[1..breakpoints.len() - 1];
    inner.partition_point(|&b| b < v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64).collect()
    }

    #[test]
    fn identical_samples_give_unit_ratios_everywhere() {
        let s = ramp(100);
        let r = build_empirical_ratio(&s, &s, 5, Partition::Quantile, OutOfRangePolicy::default())
            .unwrap();
        assert!(r.ratios().iter().all(|&v| v == 1.0));
        for y in [-3.0, 0.0, 17.5, 99.0, 250.0] {
            assert_eq!(r.evaluate(y), 1.0);
        }
    }

    #[test]
    fn quantile_partition_gives_equal_reference_counts() {
        // 100 distinct values into 5 bins: every reference bin holds 20,
        // so a ratio of target-count/20 per bin.
        let reference = ramp(100);
        let target: Vec<f64> = (0..100).map(|i| (i as f64) + 30.0).collect();
        let r = build_empirical_ratio(
            &reference,
            &target,
            5,
            Partition::Quantile,
            OutOfRangePolicy::ClampToEndBins,
        )
        .unwrap();
        // Shifted-up sample: counts pile into the upper bins.
        let total: f64 = r.ratios().iter().map(|v| v * 20.0).sum();
        assert_eq!(total, 100.0);
        assert!(r.ratios().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn evaluation_clamps_below_and_above_the_range() {
        let reference = ramp(10);
        let target: Vec<f64> = ramp(10).iter().map(|v| v * 2.0 - 4.0).collect();
        let r = build_empirical_ratio(
            &reference,
            &target,
            2,
            Partition::Quantile,
            OutOfRangePolicy::ClampToEndBins,
        )
        .unwrap();
        assert_eq!(r.evaluate(-100.0), r.ratios()[0]);
        assert_eq!(r.evaluate(100.0), r.ratios()[1]);
    }

    #[test]
    fn interior_breakpoint_evaluates_to_the_left_bin() {
        let reference = ramp(10);
        let r = build_empirical_ratio(
            &reference,
            &reference,
            2,
            Partition::Quantile,
            OutOfRangePolicy::ClampToEndBins,
        )
        .unwrap();
        // Interior boundary is the 5th order statistic = 4.0; bins are
        // left-open right-closed, so 4.0 belongs to bin 0.
        assert_eq!(r.breakpoints()[1], 4.0);
        let mut reference2 = ramp(10);
        reference2.reverse(); // same multiset, same result
        let target: Vec<f64> = vec![4.0; 10];
        let r2 = build_empirical_ratio(
            &reference2,
            &target,
            2,
            Partition::Quantile,
            OutOfRangePolicy::ClampToEndBins,
        )
        .unwrap();
        assert_eq!(r2.ratios()[0], 10.0 / 5.0);
        assert_eq!(r2.ratios()[1], 0.0);
    }

    #[test]
    fn empty_reference_bin_under_equidistant_partition_is_an_error() {
        // Reference mass only near the ends leaves the middle bins empty.
        let reference = vec![0.0, 0.01, 0.02, 0.03, 9.97, 9.98, 9.99, 10.0];
        let target = vec![5.0; 8];
        let r = build_empirical_ratio(
            &reference,
            &target,
            4,
            Partition::Equidistant,
            OutOfRangePolicy::ClampToEndBins,
        );
        assert!(matches!(r, Err(Error::EmptyReferenceBin { .. })));
    }

    #[test]
    fn drop_policy_discards_out_of_range_target_mass() {
        let reference = ramp(10);
        let target: Vec<f64> = (0..10).map(|i| i as f64 + 100.0).collect();
        let dropped = build_empirical_ratio(
            &reference,
            &target,
            2,
            Partition::Quantile,
            OutOfRangePolicy::Drop,
        )
        .unwrap();
        assert!(dropped.ratios().iter().all(|&v| v == 0.0));
        let clamped = build_empirical_ratio(
            &reference,
            &target,
            2,
            Partition::Quantile,
            OutOfRangePolicy::ClampToEndBins,
        )
        .unwrap();
        assert_eq!(clamped.ratios()[1], 10.0 / 5.0);
    }

    #[test]
    fn mass_consistency_holds_with_clamping_and_bounds_with_dropping() {
        let reference = ramp(50);
        let target: Vec<f64> = (0..50).map(|i| i as f64 * 1.4 - 8.0).collect();
        for (policy, expect_full) in [
            (OutOfRangePolicy::ClampToEndBins, true),
            (OutOfRangePolicy::Drop, false),
        ] {
            let r =
                build_empirical_ratio(&reference, &target, 5, Partition::Quantile, policy).unwrap();
            let mass: f64 = r.ratios().iter().map(|v| v * 10.0 / 50.0).sum();
            if expect_full {
                assert!((mass - 1.0).abs() < 1e-12);
            } else {
                assert!(mass <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_sample_sizes_are_rejected() {
        let r = build_empirical_ratio(
            &ramp(10),
            &ramp(11),
            2,
            Partition::Quantile,
            OutOfRangePolicy::default(),
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn single_bin_ratio_is_the_in_range_target_fraction() {
        let reference = ramp(10);
        let target: Vec<f64> = (0..10).map(|i| i as f64 + 5.0).collect();
        let r = build_empirical_ratio(
            &reference,
            &target,
            1,
            Partition::Quantile,
            OutOfRangePolicy::Drop,
        )
        .unwrap();
        // Values 5..9 fall inside (0, 9]; 10..14 fall outside and drop.
        assert_eq!(r.ratios(), &[5.0 / 10.0]);
    }

    #[test]
    fn csv_round_trips_breakpoints_and_ratios_textually() {
        let reference = ramp(10);
        let r = build_empirical_ratio(
            &reference,
            &reference,
            2,
            Partition::Quantile,
            OutOfRangePolicy::default(),
        )
        .unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "breakpoint,ratio");
        assert_eq!(lines.len(), 1 + r.bins() + 1);
    }
}
