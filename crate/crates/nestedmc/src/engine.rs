//! The estimators.
//!
//! Four ways to turn outer scenarios into per-scenario loss estimates:
//!
//! - [`estimate_sn`]: the standard nested estimator — a fresh batch of `m`
//!   inner samples per scenario.
//! - [`estimate_sr`]: the recycling estimator — inner batches only at a
//!   small set of reference scenarios; every other scenario's loss is an
//!   importance-weighted mean of a reference batch, the weight being the
//!   density ratio of the target's inner law to the reference's.
//! - [`estimate_nsr`]: the same, with the density ratio replaced by a
//!   binned empirical estimate built from first-transition samples.
//! - [`estimate_regression`]: the curve-fitting baseline — losses are
//!   simulated at a few sample points and a least-squares fit over a basis
//!   is read at every scenario.
//!
//! Every stochastic unit draws from a stream keyed by its scenario (or
//! sample-point) index, so estimators that touch the same unit use
//! identical numbers: a recycling plan in which every scenario references
//! itself reproduces the standard estimator bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::empirical::{build_empirical_ratio, OutOfRangePolicy, Partition};
use crate::math::KahanSum;
use crate::models::OuterScenario;
use crate::rng::{stream, StreamKind};
use crate::weights::{PairWeight, WeightInput};
use rand_chacha::ChaCha8Rng;

/// One inner-valuation problem: how to draw a sample of the discounted
/// inner value from a scenario, and how scenarios reweight against each
/// other.
pub trait InnerProblem: Sync {
    /// Draw one inner path from `scenario`; return its discounted value
    /// and the record its recycling weight is evaluated at.
    fn sample(&self, scenario: &OuterScenario, rng: &mut ChaCha8Rng) -> Result<(f64, WeightInput)>;

    /// The closed-form weight family for a (reference, target) pair.
    fn pair_weight(&self, reference: &OuterScenario, target: &OuterScenario)
        -> Result<PairWeight>;

    /// Draw `count` values from the scenario's own first-transition law,
    /// on the same scale as [`WeightInput::binning_value`]. Used only to
    /// build empirical ratios.
    fn sample_binning_values(
        &self,
        scenario: &OuterScenario,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>>;

    /// True when the scenario's inner law is degenerate (no density), so
    /// it cannot be reweighted from any other scenario and must use its
    /// own samples.
    fn requires_self_reference(&self, _scenario: &OuterScenario) -> bool {
        false
    }

    /// Constant added to the averaged inner value to form the loss — the
    /// place for purchase prices and other terms that sit outside the
    /// inner expectation and therefore must not be reweighted.
    fn loss_offset(&self, _scenario: &OuterScenario) -> f64 {
        0.0
    }
}

/// Estimator family tags for reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Standard nested simulation.
    Sn,
    /// Sample recycling with parametric weights.
    Sr,
    /// Sample recycling with empirical (binned) weights.
    Nsr,
    /// Least-squares curve fitting.
    Regression,
}

/// Operation counters in the two effort units: inner-path simulations
/// (each includes its payoff evaluation) and weight evaluations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CeRecord {
    /// Inner paths simulated (payoff evaluation included).
    pub inner_paths: u64,
    /// Recycling-weight evaluations.
    pub weight_evals: u64,
    /// First-transition draws made at target scenarios for empirical
    /// ratios. Reported separately: whether they count against the method
    /// is an accounting choice, so both views stay available.
    pub target_first_steps: u64,
}

/// Per-scenario loss estimates from one estimator run.
#[derive(Clone, Debug)]
pub struct LossEstimates {
    pub method: Method,
    pub losses: Vec<f64>,
    pub ce: CeRecord,
}

/// Seed coordinates of one replication.
#[derive(Clone, Copy, Debug)]
pub struct RunContext {
    pub seed: u64,
    pub trial: u64,
}

/// One reference scenario's recorded inner batch.
#[derive(Clone, Debug)]
pub struct InnerSampleSet {
    /// Index of the reference scenario this batch was drawn from.
    pub ref_index: usize,
    /// Discounted inner values, one per path.
    pub payoffs: Vec<f64>,
    /// Weight-evaluation records, aligned with `payoffs`.
    pub weight_inputs: Vec<WeightInput>,
}

impl InnerSampleSet {
    /// Order-sensitive content hash of the payoff array; lets tests assert
    /// that two estimates genuinely shared one batch.
    pub fn content_hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for p in &self.payoffs {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Which scenario each target borrows samples from, and with what mixing
/// weight. `assignments[i]` lists (position into `references`, weight)
/// pairs summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePlan {
    pub references: Vec<usize>,
    pub assignments: Vec<Vec<(usize, f64)>>,
}

impl ReferencePlan {
    /// Every target borrows from the single scenario `ref_index`.
    pub fn single(ref_index: usize, n: usize) -> Self {
        ReferencePlan {
            references: vec![ref_index],
            assignments: (0..n).map(|_| vec![(0, 1.0)]).collect(),
        }
    }

    /// Every scenario is its own reference (degenerates to the standard
    /// estimator).
    pub fn self_plan(n: usize) -> Self {
        ReferencePlan {
            references: (0..n).collect(),
            assignments: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    /// Number of distinct references.
    pub fn reference_count(&self) -> usize {
        self.references.len()
    }

    /// Position of scenario `i` in the reference list, if it is one.
    fn reference_position(&self, i: usize) -> Option<usize> {
        self.references.iter().position(|&k| k == i)
    }

    /// Structural checks: positions in range, weights nonnegative and
    /// summing to one, references assigned to themselves.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.references.is_empty() {
            return Err(Error::InvalidParameter("reference plan has no references".into()));
        }
        if self.assignments.len() != n {
            return Err(Error::InvalidParameter(format!(
                "plan covers {} targets but there are {n} scenarios",
                self.assignments.len()
            )));
        }
        for &k in &self.references {
            if k >= n {
                return Err(Error::InvalidParameter(format!(
                    "reference index {k} out of range for {n} scenarios"
                )));
            }
        }
        for (i, assignment) in self.assignments.iter().enumerate() {
            if assignment.is_empty() {
                return Err(Error::InvalidParameter(format!("target {i} has no reference")));
            }
            let mut total = 0.0;
            for &(pos, w) in assignment {
                if pos >= self.references.len() {
                    return Err(Error::InvalidParameter(format!(
                        "target {i} points at reference position {pos} of {}",
                        self.references.len()
                    )));
                }
                if !(w >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "target {i} has a negative mixing weight {w}"
                    )));
                }
                total += w;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "target {i} mixing weights sum to {total}, not 1"
                )));
            }
        }
        Ok(())
    }
}

/// How references are chosen from the scenario set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceStrategy {
    /// Equal-width blocks over the scenario value range; one reference per
    /// non-empty block.
    EquidistantBlocks { blocks: usize },
    /// Equal-count blocks of the sorted scenario values.
    QuantileBlocks { blocks: usize },
    /// Start at the largest scenario and step down so consecutive
    /// references stay within the given ratio (> 1) of each other.
    RatioLadder { ratio: f64 },
    /// References chosen as with equal-count blocks, but every target
    /// mixes all of them with equal weight 1/b.
    EqualWeightAll { blocks: usize },
}

/// Which scenario inside a block becomes its reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// The scenario nearest the middle of the block's value span.
    #[default]
    Midpoint,
    /// The scenario with the largest value in the block.
    RightEndpoint,
    /// Alias of the largest-value anchor, named for ladder-style plans
    /// that grow downward from the maximum.
    MaxStart,
}

fn anchor_index(block: &[usize], values: &[f64], anchor: Anchor) -> usize {
    debug_assert!(!block.is_empty());
    match anchor {
        Anchor::Midpoint => {
            let lo = block.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
            let hi = block.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
            let mid = 0.5 * (lo + hi);
            let mut best = block[0];
            for &i in block {
                let d = (values[i] - mid).abs();
                let best_d = (values[best] - mid).abs();
                if d < best_d || (d == best_d && i < best) {
                    best = i;
                }
            }
            best
        }
        Anchor::RightEndpoint | Anchor::MaxStart => {
            let mut best = block[0];
            for &i in block {
                if values[i] > values[best] {
                    best = i;
                }
            }
            best
        }
    }
}

/// Build a reference plan over scenario values.
///
/// Block strategies error when asked for more blocks than scenarios.
/// Boundary values join the right block; empty equidistant blocks are
/// skipped. The ladder ignores the anchor: each rung's defining scenario
/// is its reference, and every target borrows from the lowest rung at or
/// above its own value.
pub fn make_reference_plan(
    values: &[f64],
    strategy: &ReferenceStrategy,
    anchor: Anchor,
) -> Result<ReferencePlan> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidParameter("no scenarios to plan over".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("scenario values must be finite".into()));
    }
    let check_blocks = |blocks: usize| -> Result<()> {
        if blocks < 1 {
            return Err(Error::InvalidParameter("block count must be at least 1".into()));
        }
        if blocks > n {
            return Err(Error::InvalidParameter(format!(
                "{blocks} blocks requested for only {n} scenarios"
            )));
        }
        Ok(())
    };

    match *strategy {
        ReferenceStrategy::EquidistantBlocks { blocks } => {
            check_blocks(blocks)?;
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let width = (hi - lo) / blocks as f64;
            let block_of = |v: f64| -> usize {
                if width <= 0.0 {
                    return 0;
                }
                (((v - lo) / width) as usize).min(blocks - 1)
            };
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); blocks];
            for (i, &v) in values.iter().enumerate() {
                members[block_of(v)].push(i);
            }
            plan_from_blocks(&members, values, anchor, n)
        }
        ReferenceStrategy::QuantileBlocks { blocks } => {
            check_blocks(blocks)?;
            let members = quantile_blocks(values, blocks);
            plan_from_blocks(&members, values, anchor, n)
        }
        ReferenceStrategy::EqualWeightAll { blocks } => {
            check_blocks(blocks)?;
            let members = quantile_blocks(values, blocks);
            let mut references = Vec::with_capacity(blocks);
            for block in &members {
                references.push(anchor_index(block, values, anchor));
            }
            let b = references.len();
            let mix = 1.0 / b as f64;
            let mut assignments: Vec<Vec<(usize, f64)>> =
                (0..n).map(|_| (0..b).map(|p| (p, mix)).collect()).collect();
            // References keep unit weight on their own batch.
            for (pos, &k) in references.iter().enumerate() {
                assignments[k] = vec![(pos, 1.0)];
            }
            let plan = ReferencePlan { references, assignments };
            plan.validate(n)?;
            Ok(plan)
        }
        ReferenceStrategy::RatioLadder { ratio } => {
            if !(ratio > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "ladder ratio must exceed 1, got {ratio}"
                )));
            }
            // Distinct values descending, remembering the first scenario
            // index carrying each value.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                values[b].partial_cmp(&values[a]).expect("finite").then(a.cmp(&b))
            });
            let mut distinct: Vec<(f64, usize)> = Vec::new();
            for &i in &order {
                if distinct.last().map(|&(v, _)| v != values[i]).unwrap_or(true) {
                    distinct.push((values[i], i));
                }
            }
            let mut rung_values = vec![distinct[0].0];
            let mut references = vec![distinct[0].1];
            loop {
                let prev = *rung_values.last().expect("nonempty");
                // Smallest value strictly inside (prev/ratio, prev); if
                // the gap is empty, jump to the next value below it.
                let inside = distinct
                    .iter()
                    .filter(|&&(v, _)| v < prev && v > prev / ratio)
                    .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
                // The fallback must stay strictly below the current rung:
                // for non-positive rungs prev/ratio is at or above prev, so
                // filtering on it alone would re-select the rung forever.
                let next = match inside {
                    Some(&(v, i)) => (v, i),
                    None => match distinct
                        .iter()
                        .filter(|&&(v, _)| v < prev && v <= prev / ratio)
                        .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"))
                    {
                        Some(&(v, i)) => (v, i),
                        None => break,
                    },
                };
                rung_values.push(next.0);
                references.push(next.1);
            }
            // Assign each target to the lowest rung at or above its value
            // (rungs are sorted descending).
            let mut assignments = Vec::with_capacity(n);
            for &v in values {
                let mut pos = 0;
                for (p, &rv) in rung_values.iter().enumerate() {
                    if rv >= v {
                        pos = p;
                    } else {
                        break;
                    }
                }
                assignments.push(vec![(pos, 1.0)]);
            }
            for (pos, &k) in references.iter().enumerate() {
                assignments[k] = vec![(pos, 1.0)];
            }
            let plan = ReferencePlan { references, assignments };
            plan.validate(n)?;
            Ok(plan)
        }
    }
}

/// Equal-count blocks of scenario indices, ordered by value (ties by
/// index).
fn quantile_blocks(values: &[f64], blocks: usize) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite").then(a.cmp(&b)));
    (0..blocks)
        .map(|j| order[j * n / blocks..(j + 1) * n / blocks].to_vec())
        .collect()
}

fn plan_from_blocks(
    members: &[Vec<usize>],
    values: &[f64],
    anchor: Anchor,
    n: usize,
) -> Result<ReferencePlan> {
    let mut references = Vec::new();
    let mut assignments: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for block in members.iter().filter(|b| !b.is_empty()) {
        let r = anchor_index(block, values, anchor);
        let pos = references.len();
        references.push(r);
        for &i in block {
            assignments[i] = vec![(pos, 1.0)];
        }
    }
    let plan = ReferencePlan { references, assignments };
    plan.validate(n)?;
    Ok(plan)
}

/// Copy of `plan` in which every degenerate scenario (as judged by the
/// problem) borrows from a reference with its exact value — the first
/// such scenario becomes the reference for its value group. This is the
/// plan the recycling estimators actually execute, so instrumentation
/// that predicts operation counts must be computed from it.
pub fn effective_reference_plan(
    plan: &ReferencePlan,
    problem: &impl InnerProblem,
    scenarios: &[OuterScenario],
) -> ReferencePlan {
    let mut plan = plan.clone();
    let mut degenerate_refs: Vec<(f64, usize)> = Vec::new(); // (value, position)
    for i in 0..scenarios.len() {
        if !problem.requires_self_reference(&scenarios[i]) {
            continue;
        }
        if let Some(pos) = plan.reference_position(i) {
            plan.assignments[i] = vec![(pos, 1.0)];
            degenerate_refs.push((scenarios[i].value, pos));
            continue;
        }
        let existing = degenerate_refs
            .iter()
            .find(|&&(v, _)| v == scenarios[i].value)
            .map(|&(_, pos)| pos);
        let pos = match existing {
            Some(pos) => pos,
            None => {
                let pos = plan.references.len();
                plan.references.push(i);
                degenerate_refs.push((scenarios[i].value, pos));
                pos
            }
        };
        plan.assignments[i] = vec![(pos, 1.0)];
    }
    plan
}

fn pair_context(e: Error, target: usize, reference: usize) -> Error {
    match e {
        Error::SupportMismatch(msg) => Error::SupportMismatch(format!(
            "target scenario {target} against reference scenario {reference}: {msg}"
        )),
        other => other,
    }
}

/// Standard nested estimator: a fresh batch of `m` inner samples per
/// scenario, averaged.
pub fn estimate_sn(
    problem: &impl InnerProblem,
    scenarios: &[OuterScenario],
    m: usize,
    ctx: &RunContext,
) -> Result<LossEstimates> {
    check_run(scenarios, m)?;
    let losses: Vec<f64> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, scenario)| -> Result<f64> {
            let mut rng = stream(ctx.seed, StreamKind::Inner, ctx.trial, i as u64);
            let mut sum = KahanSum::new();
            for _ in 0..m {
                let (g, _) = problem.sample(scenario, &mut rng)?;
                sum.add(g);
            }
            Ok(sum.total() / m as f64 + problem.loss_offset(scenario))
        })
        .collect::<Result<_>>()?;
    Ok(LossEstimates {
        method: Method::Sn,
        losses,
        ce: CeRecord {
            inner_paths: (scenarios.len() * m) as u64,
            weight_evals: 0,
            target_first_steps: 0,
        },
    })
}

/// Generate the reference batches of a plan (shared by the parametric and
/// empirical recycling estimators; exposed for tests that assert batch
/// sharing).
pub fn reference_sample_sets(
    problem: &impl InnerProblem,
    scenarios: &[OuterScenario],
    plan: &ReferencePlan,
    m: usize,
    ctx: &RunContext,
) -> Result<Vec<InnerSampleSet>> {
    plan.references
        .par_iter()
        .map(|&k| -> Result<InnerSampleSet> {
            let mut rng = stream(ctx.seed, StreamKind::Inner, ctx.trial, k as u64);
            let mut payoffs = Vec::with_capacity(m);
            let mut weight_inputs = Vec::with_capacity(m);
            for _ in 0..m {
                let (g, wi) = problem.sample(&scenarios[k], &mut rng)?;
                payoffs.push(g);
                weight_inputs.push(wi);
            }
            Ok(InnerSampleSet { ref_index: k, payoffs, weight_inputs })
        })
        .collect()
}

fn check_run(scenarios: &[OuterScenario], m: usize) -> Result<()> {
    if scenarios.is_empty() {
        return Err(Error::InvalidParameter("no scenarios".into()));
    }
    if m < 1 {
        return Err(Error::InvalidParameter("inner sample size must be at least 1".into()));
    }
    Ok(())
}

/// Recycling estimator with parametric weights.
pub fn estimate_sr(
    problem: &impl InnerProblem,
    scenarios: &[OuterScenario],
    plan: &ReferencePlan,
    m: usize,
    ctx: &RunContext,
) -> Result<LossEstimates> {
    check_run(scenarios, m)?;
    plan.validate(scenarios.len())?;
    let plan = effective_reference_plan(plan, problem, scenarios);
    let sets = reference_sample_sets(problem, scenarios, &plan, m, ctx)?;
    let mut weight_evals = 0u64;
    let losses: Vec<f64> = (0..scenarios.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            if let Some(pos) = plan.reference_position(i) {
                let mut sum = KahanSum::new();
                for &g in &sets[pos].payoffs {
                    sum.add(g);
                }
                return Ok(sum.total() / m as f64 + problem.loss_offset(&scenarios[i]));
            }
            let mut loss = 0.0;
            for &(pos, mix) in &plan.assignments[i] {
                let set = &sets[pos];
                let weight = problem
                    .pair_weight(&scenarios[set.ref_index], &scenarios[i])
                    .map_err(|e| pair_context(e, i, set.ref_index))?;
                let mut sum = KahanSum::new();
                for j in 0..m {
                    let w = weight
                        .evaluate(&set.weight_inputs[j])
                        .map_err(|e| pair_context(e, i, set.ref_index))?;
                    sum.add(w * set.payoffs[j]);
                }
                loss += mix * sum.total() / m as f64;
            }
            Ok(loss + problem.loss_offset(&scenarios[i]))
        })
        .collect::<Result<_>>()?;
    for (i, assignment) in plan.assignments.iter().enumerate() {
        if plan.reference_position(i).is_none() {
            weight_evals += (assignment.len() * m) as u64;
        }
    }
    Ok(LossEstimates {
        method: Method::Sr,
        losses,
        ce: CeRecord {
            inner_paths: (plan.reference_count() * m) as u64,
            weight_evals,
            target_first_steps: 0,
        },
    })
}

/// Recycling estimator with empirical (binned) weights.
///
/// For each non-reference target, `m` first-transition values are drawn
/// from the target's own law, a binned ratio against the reference batch
/// is built, and the reference payoffs are reweighted through it.
#[allow(clippy::too_many_arguments)]
pub fn estimate_nsr(
    problem: &impl InnerProblem,
    scenarios: &[OuterScenario],
    plan: &ReferencePlan,
    m: usize,
    bins: usize,
    partition: Partition,
    policy: OutOfRangePolicy,
    ctx: &RunContext,
) -> Result<LossEstimates> {
    check_run(scenarios, m)?;
    plan.validate(scenarios.len())?;
    let plan = effective_reference_plan(plan, problem, scenarios);
    let sets = reference_sample_sets(problem, scenarios, &plan, m, ctx)?;
    let ref_binning: Vec<Vec<f64>> = sets
        .iter()
        .map(|s| s.weight_inputs.iter().map(|wi| wi.binning_value()).collect())
        .collect();
    let mut weight_evals = 0u64;
    let mut target_first_steps = 0u64;
    let losses: Vec<f64> = (0..scenarios.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            if let Some(pos) = plan.reference_position(i) {
                let mut sum = KahanSum::new();
                for &g in &sets[pos].payoffs {
                    sum.add(g);
                }
                return Ok(sum.total() / m as f64 + problem.loss_offset(&scenarios[i]));
            }
            let mut rng = stream(ctx.seed, StreamKind::TargetFirstStep, ctx.trial, i as u64);
            let target_draws = problem.sample_binning_values(&scenarios[i], m, &mut rng)?;
            let mut loss = 0.0;
            for &(pos, mix) in &plan.assignments[i] {
                let set = &sets[pos];
                let ratio =
                    build_empirical_ratio(&ref_binning[pos], &target_draws, bins, partition, policy)
                        .map_err(|e| pair_context(e, i, set.ref_index))?;
                let mut sum = KahanSum::new();
                for j in 0..m {
                    sum.add(ratio.evaluate(ref_binning[pos][j]) * set.payoffs[j]);
                }
                loss += mix * sum.total() / m as f64;
            }
            Ok(loss + problem.loss_offset(&scenarios[i]))
        })
        .collect::<Result<_>>()?;
    for (i, assignment) in plan.assignments.iter().enumerate() {
        if plan.reference_position(i).is_none() {
            weight_evals += (assignment.len() * m) as u64;
            target_first_steps += m as u64;
        }
    }
    Ok(LossEstimates {
        method: Method::Nsr,
        losses,
        ce: CeRecord {
            inner_paths: (plan.reference_count() * m) as u64,
            weight_evals,
            target_first_steps,
        },
    })
}

/// Basis families for the regression baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Basis {
    /// 1 plus powers 1..=degree of every coordinate (no cross terms).
    /// Coordinates are divided by `scale` first, purely for conditioning.
    Polynomial {
        degree: usize,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// {1, F, F^2} plus a hinge (F-k)^+ and its square per knot, for
    /// one-dimensional states.
    HingeQuadratic { knots: Vec<f64> },
}

fn default_scale() -> f64 {
    1.0
}

impl Basis {
    /// Number of basis functions over a `dim`-dimensional state.
    pub fn len(&self, dim: usize) -> usize {
        match self {
            Basis::Polynomial { degree, .. } => 1 + degree * dim,
            Basis::HingeQuadratic { knots } => 3 + 2 * knots.len(),
        }
    }

    /// Evaluate all basis functions at `state` into `out`.
    pub fn eval(&self, state: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        match self {
            Basis::Polynomial { degree, scale } => {
                if !(*scale > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "basis scale must be positive, got {scale}"
                    )));
                }
                out.push(1.0);
                for &x in state {
                    let u = x / scale;
                    let mut p = 1.0;
                    for _ in 0..*degree {
                        p *= u;
                        out.push(p);
                    }
                }
            }
            Basis::HingeQuadratic { knots } => {
                if state.len() != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "hinge basis is one-dimensional, got a state of dimension {}",
                        state.len()
                    )));
                }
                let f = state[0];
                out.push(1.0);
                out.push(f);
                out.push(f * f);
                for &k in knots {
                    let h = (f - k).max(0.0);
                    out.push(h);
                    out.push(h * h);
                }
            }
        }
        Ok(())
    }
}

/// Relative singular-value cutoff below which a design direction is
/// dropped from the least-squares solution.
const SINGULAR_CUTOFF: f64 = 1e-12;

/// Curve-fitting baseline: simulate mean losses at `sample_points`, fit
/// the basis by least squares, and read the fitted curve at every
/// scenario state.
pub fn estimate_regression<F>(
    sample_points: &[Vec<f64>],
    scenario_states: &[Vec<f64>],
    basis: &Basis,
    m: usize,
    simulate: F,
    ctx: &RunContext,
) -> Result<LossEstimates>
where
    F: Fn(&[f64], &mut ChaCha8Rng) -> Result<f64> + Sync,
{
    if sample_points.is_empty() || scenario_states.is_empty() {
        return Err(Error::InvalidParameter("regression needs sample points and scenarios".into()));
    }
    if m < 1 {
        return Err(Error::InvalidParameter("inner sample size must be at least 1".into()));
    }
    let dim = scenario_states[0].len();
    if sample_points.iter().any(|p| p.len() != dim)
        || scenario_states.iter().any(|s| s.len() != dim)
    {
        return Err(Error::InvalidParameter(
            "sample points and scenario states must share one dimension".into(),
        ));
    }
    let k = basis.len(dim);
    if sample_points.len() < k {
        return Err(Error::SingularFit(format!(
            "underdetermined fit: {} sample points for {k} basis functions",
            sample_points.len()
        )));
    }

    // Simulated mean loss at each sample point.
    let targets: Vec<f64> = sample_points
        .par_iter()
        .enumerate()
        .map(|(p, point)| -> Result<f64> {
            let mut rng = stream(ctx.seed, StreamKind::RegressionSample, ctx.trial, p as u64);
            let mut sum = KahanSum::new();
            for _ in 0..m {
                sum.add(simulate(point, &mut rng)?);
            }
            Ok(sum.total() / m as f64)
        })
        .collect::<Result<_>>()?;

    // Least squares through a singular-value decomposition. Directions
    // with singular values below the cutoff are dropped, giving the
    // minimum-norm fit when columns are collinear — e.g. a hinge knot
    // below every sampled point, whose column then equals a combination
    // of the constant and linear ones. Fitted values on the sampled span
    // are unique even when the coefficients are not.
    let mut row = Vec::with_capacity(k);
    let mut design = nalgebra::DMatrix::zeros(sample_points.len(), k);
    for (p, point) in sample_points.iter().enumerate() {
        basis.eval(point, &mut row)?;
        for (c, &v) in row.iter().enumerate() {
            design[(p, c)] = v;
        }
    }
    let svd = design.svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if !(s_max > 0.0) {
        return Err(Error::SingularFit("design matrix is identically zero".into()));
    }
    let rhs = nalgebra::DVector::from_vec(targets);
    let beta = svd
        .solve(&rhs, SINGULAR_CUTOFF * s_max)
        .map_err(|e| Error::SingularFit(e.to_string()))?;

    let mut losses = Vec::with_capacity(scenario_states.len());
    for state in scenario_states {
        basis.eval(state, &mut row)?;
        let mut acc = KahanSum::new();
        for (c, &v) in row.iter().enumerate() {
            acc.add(v * beta[c]);
        }
        losses.push(acc.total());
    }
    Ok(LossEstimates {
        method: Method::Regression,
        losses,
        ce: CeRecord {
            inner_paths: (sample_points.len() * m) as u64,
            weight_evals: 0,
            target_first_steps: 0,
        },
    })
}
