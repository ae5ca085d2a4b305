//! Property-based invariants: conservation and ordering laws that must
//! hold for every input, not just the pinned experiment shapes.

use nestedmc::empirical::{build_empirical_ratio, OutOfRangePolicy, Partition};
use nestedmc::engine::{make_reference_plan, Anchor, InnerProblem, ReferenceStrategy};
use nestedmc::models::{Model, OuterScenario, ToyParams};
use nestedmc::payoffs::OracleCurve;
use nestedmc::risk::{apply_risk_measure, RiskMeasureSpec};
use nestedmc::weights::WeightInput;
use nestedmc::Error;
use proptest::prelude::*;

/// Strictly increasing values (gap construction), as produced by any
/// continuous sampler almost surely.
fn distinct_values(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.001f64..2.0, len).prop_map(|gaps| {
        let mut acc = -3.0;
        gaps.into_iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect()
    })
}

/// Scenario values that deliberately include exact-zero duplicates and
/// negatives, the shapes an absorbing account produces.
fn scenario_values() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(
        prop_oneof![2 => Just(0.0f64), 8 => -10.0f64..10.0],
        1..50,
    )
}

fn anchors() -> impl Strategy<Value = Anchor> {
    prop_oneof![Just(Anchor::Midpoint), Just(Anchor::RightEndpoint), Just(Anchor::MaxStart)]
}

fn strategies() -> impl Strategy<Value = ReferenceStrategy> {
    prop_oneof![
        (1usize..8).prop_map(|blocks| ReferenceStrategy::EquidistantBlocks { blocks }),
        (1usize..8).prop_map(|blocks| ReferenceStrategy::QuantileBlocks { blocks }),
        (1usize..8).prop_map(|blocks| ReferenceStrategy::EqualWeightAll { blocks }),
        (1.01f64..4.0).prop_map(|ratio| ReferenceStrategy::RatioLadder { ratio }),
    ]
}

fn clamp_blocks(strategy: ReferenceStrategy, n: usize) -> ReferenceStrategy {
    match strategy {
        ReferenceStrategy::EquidistantBlocks { blocks } => {
            ReferenceStrategy::EquidistantBlocks { blocks: blocks.min(n) }
        }
        ReferenceStrategy::QuantileBlocks { blocks } => {
            ReferenceStrategy::QuantileBlocks { blocks: blocks.min(n) }
        }
        ReferenceStrategy::EqualWeightAll { blocks } => {
            ReferenceStrategy::EqualWeightAll { blocks: blocks.min(n) }
        }
        ladder => ladder,
    }
}

proptest! {
    /// The binned ratio redistributes the target sample's mass over the
    /// reference sample: summing the ratio over the reference points
    /// recovers the full target count under clamping, and never more than
    /// that when out-of-range targets are dropped.
    #[test]
    fn empirical_ratio_conserves_target_mass(
        refs in distinct_values(4..120),
        raw_targets in proptest::collection::vec(-3.0f64..3.0, 4..120),
        l in 1usize..12,
        drop in proptest::bool::ANY,
    ) {
        let m = refs.len().min(raw_targets.len());
        // Quantile boundaries sit at order statistics of rank a*m/l; the
        // first one collides with the left edge unless every bin holds at
        // least two reference points, so the builder requires m >= 2l.
        let l = l.min(m / 2).max(1);
        let refs = &refs[..m];
        let targets = &raw_targets[..m];
        let policy = if drop { OutOfRangePolicy::Drop } else { OutOfRangePolicy::ClampToEndBins };

        let ratio = build_empirical_ratio(refs, targets, l, Partition::Quantile, policy).unwrap();
        prop_assert_eq!(ratio.bins(), l);
        prop_assert_eq!(ratio.sample_size(), m);

        let recovered: f64 = refs.iter().map(|&v| ratio.evaluate(v)).sum();
        let tol = 1e-9 * m as f64;
        match policy {
            OutOfRangePolicy::ClampToEndBins => {
                prop_assert!((recovered - m as f64).abs() <= tol,
                    "clamped mass {recovered} != {m}");
            }
            OutOfRangePolicy::Drop => {
                prop_assert!(recovered <= m as f64 + tol, "dropped mass {recovered} > {m}");
            }
        }

        // Construction is order-invariant: the samples arrive unsorted in
        // real use.
        let mut rev = refs.to_vec();
        rev.reverse();
        let again = build_empirical_ratio(&rev, targets, l, Partition::Quantile, policy).unwrap();
        prop_assert_eq!(ratio.ratios(), again.ratios());
    }

    /// A quantile partition over distinct reference values always succeeds
    /// and never produces an empty or non-finite bin.
    #[test]
    fn quantile_partitions_have_no_empty_bins(
        refs in distinct_values(6..150),
        l in 1usize..16,
    ) {
        let l = l.min(refs.len() / 2).max(1);
        let targets = refs.clone(); // identical sample: every ratio ~ 1
        let ratio = build_empirical_ratio(&refs, &targets, l, Partition::Quantile,
            OutOfRangePolicy::ClampToEndBins).unwrap();
        prop_assert!(ratio.ratios().iter().all(|r| r.is_finite() && *r > 0.0));
        // Breakpoints strictly increase, so bins are genuine intervals.
        let b = ratio.breakpoints();
        prop_assert!(b.windows(2).all(|w| w[1] > w[0]));
        // An identical target sample yields per-bin ratios near one under
        // rank/value agreement of distinct values.
        for r in ratio.ratios() {
            prop_assert!((r - 1.0).abs() <= 1e-9, "self-ratio {r} != 1");
        }
    }

    /// Every reference strategy yields a structurally valid plan on any
    /// scenario set, including sets with exact-zero duplicates and
    /// negative values (absorbed accounts); references always keep
    /// themselves at unit weight.
    #[test]
    fn reference_plans_are_structurally_sound(
        values in scenario_values(),
        strategy in strategies(),
        anchor in anchors(),
    ) {
        let n = values.len();
        let strategy = clamp_blocks(strategy, n);
        let plan = make_reference_plan(&values, &strategy, anchor).unwrap();
        plan.validate(n).unwrap();

        // References are distinct scenarios.
        let mut refs = plan.references.clone();
        refs.sort_unstable();
        refs.dedup();
        prop_assert_eq!(refs.len(), plan.references.len());

        // Each reference is assigned exactly itself at weight one.
        for (pos, &k) in plan.references.iter().enumerate() {
            prop_assert_eq!(&plan.assignments[k], &vec![(pos, 1.0)],
                "reference {} not self-assigned", k);
        }
    }

    /// Ordering and translation laws of the risk measures.
    #[test]
    fn risk_measures_respect_ordering_and_translation(
        losses in proptest::collection::vec(-100.0f64..100.0, 1..120),
        shift in -50.0f64..50.0,
        alpha_lo in 0.05f64..0.5,
        alpha_gap in 0.0f64..0.45,
        threshold in -50.0f64..50.0,
    ) {
        let n = losses.len();
        let shifted: Vec<f64> = losses.iter().map(|v| v + shift).collect();
        let lo = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let alpha_hi = alpha_lo + alpha_gap;

        // Mean and value-at-risk are translation-equivariant and bounded
        // by the sample range.
        for spec in [RiskMeasureSpec::Mean, RiskMeasureSpec::Var { alpha: alpha_lo }] {
            let base = apply_risk_measure(&spec, &losses).unwrap();
            let moved = apply_risk_measure(&spec, &shifted).unwrap();
            prop_assert!((moved - (base + shift)).abs() <= 1e-9 * (base.abs() + shift.abs() + 1.0));
            prop_assert!(base >= lo - 1e-12 && base <= hi + 1e-12);
        }

        // Value-at-risk is monotone in the level.
        let var_lo = apply_risk_measure(&RiskMeasureSpec::Var { alpha: alpha_lo }, &losses).unwrap();
        let var_hi = apply_risk_measure(&RiskMeasureSpec::Var { alpha: alpha_hi }, &losses).unwrap();
        prop_assert!(var_lo <= var_hi);

        // The tail expectation exceeds its quantile whenever it exists,
        // and a degenerate tail is the only admissible failure.
        match apply_risk_measure(&RiskMeasureSpec::Cte { alpha: alpha_lo }, &losses) {
            Ok(cte) => prop_assert!(cte > var_lo - 1e-12),
            Err(Error::DegenerateTail(_)) => {}
            Err(other) => prop_assert!(false, "unexpected error {other}"),
        }

        // Threshold measures: bounded, and monotone in the threshold.
        let ee = apply_risk_measure(&RiskMeasureSpec::ExpectedExcess { c: threshold }, &losses).unwrap();
        let ee_higher = apply_risk_measure(
            &RiskMeasureSpec::ExpectedExcess { c: threshold + 1.0 }, &losses).unwrap();
        prop_assert!(ee >= 0.0 && ee_higher <= ee + 1e-12);
        let pl = apply_risk_measure(&RiskMeasureSpec::LargeLossProb { c: threshold }, &losses).unwrap();
        prop_assert!((0.0..=1.0).contains(&pl));
        prop_assert!((pl * n as f64).round() - pl * n as f64 <= 1e-9); // a count / n

        // Discounting scales the mean exactly.
        let pv = apply_risk_measure(&RiskMeasureSpec::PresentValue { r: 0.05, tau: 2.0 }, &losses).unwrap();
        let mean = apply_risk_measure(&RiskMeasureSpec::Mean, &losses).unwrap();
        prop_assert!((pv - (-0.1f64).exp() * mean).abs() <= 1e-9 * (mean.abs() + 1.0));
    }

    /// Tabulated loss curves interpolate through their nodes, stay inside
    /// the local bracket between nodes, and clamp outside the grid.
    #[test]
    fn loss_curves_interpolate_within_brackets(
        values in distinct_values(3..20),
        raw_losses in proptest::collection::vec(-5.0f64..5.0, 3..20),
        probe in 0.0f64..1.0,
    ) {
        let k = values.len().min(raw_losses.len());
        let curve = OracleCurve {
            values: values[..k].to_vec(),
            losses: raw_losses[..k].to_vec(),
            standard_errors: vec![0.0; k],
        };
        for i in 0..k {
            let at = curve.interpolate(curve.values[i]);
            prop_assert!((at - curve.losses[i]).abs() <= 1e-12 * (curve.losses[i].abs() + 1.0),
                "node {i}: {at} vs {}", curve.losses[i]);
        }
        for i in 0..k - 1 {
            let x = curve.values[i] + probe * (curve.values[i + 1] - curve.values[i]);
            let y = curve.interpolate(x);
            let (lo, hi) = if curve.losses[i] <= curve.losses[i + 1] {
                (curve.losses[i], curve.losses[i + 1])
            } else {
                (curve.losses[i + 1], curve.losses[i])
            };
            prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
        }
        prop_assert_eq!(curve.interpolate(curve.values[0] - 10.0), curve.losses[0]);
        prop_assert_eq!(curve.interpolate(curve.values[k - 1] + 10.0), curve.losses[k - 1]);
    }

    /// The closed-form toy weight equals the transition-density ratio at
    /// every (reference, target, draw) triple.
    #[test]
    fn toy_weight_equals_the_density_ratio_everywhere(
        x_ref in -1.0f64..1.0,
        x_target in -1.0f64..1.0,
        z in -4.0f64..4.0,
    ) {
        let problem = nestedmc::analysis::ToyProblem::new().unwrap();
        let reference = OuterScenario::plain(x_ref);
        let target = OuterScenario::plain(x_target);
        let weight = problem.pair_weight(&reference, &target).unwrap();
        let w = weight.evaluate(&WeightInput::FirstStep(z)).unwrap();

        let model = Model::Toy(ToyParams {});
        let to = OuterScenario::plain(z);
        let num = nestedmc::models::transition_density(&model, &target, &to, 1.0).unwrap();
        let den = nestedmc::models::transition_density(&model, &reference, &to, 1.0).unwrap();
        let ratio = num / den;
        prop_assert!((w - ratio).abs() <= 1e-11 * ratio.abs().max(1.0),
            "weight {w} vs density ratio {ratio}");
    }
}
