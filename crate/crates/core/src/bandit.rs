//! Two-armed bandit under ambiguity.
//!
//! Pulling arm L or R in each round yields an independent draw from that
//! arm's law. A 0/1 strategy picks the arm from the history; the best
//! strategy for an uncentered reward functional attains the sublinear
//! expectation over the hull of the two laws.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{self, KernelSet, Normalization, PathFunctional};
use crate::experiments::{CsvRow, ExperimentConfig, ExperimentError};
use crate::function::PiecewiseFunction;
use crate::gheat::{self, GNormalParams};
use crate::grid::fmt17;
use crate::measures::{AmbiguitySet, DiscreteMeasure, MeanBounds, MeasureError};
use crate::variance::{self, variance_of, VarianceEnvelope};

/// Default cap on reachable reward states per round.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// Reward sums closer than this are the same state.
const STATE_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("StateSpaceOverflow: {states} reachable states in round {round} exceed the cap of {cap}")]
    StateSpaceOverflow { round: usize, states: usize, cap: usize },
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

/// Reward laws of the arms; the first two are L and R.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditArms {
    arms: Vec<DiscreteMeasure>,
}

impl BanditArms {
    pub fn new(left: DiscreteMeasure, right: DiscreteMeasure) -> Self {
        Self { arms: vec![left, right] }
    }

    pub fn from_arms(arms: Vec<DiscreteMeasure>) -> Result<Self, BanditError> {
        if arms.len() < 2 {
            return Err(BanditError::InvalidInput("at least two arms are required".into()));
        }
        Ok(Self { arms })
    }

    /// Reads the arms from the ambiguity-set JSON format.
    pub fn from_json(text: &str) -> Result<Self, BanditError> {
        Self::from_arms(AmbiguitySet::from_json(text)?.extremes().to_vec())
    }

    pub fn left(&self) -> &DiscreteMeasure {
        &self.arms[0]
    }

    pub fn right(&self) -> &DiscreteMeasure {
        &self.arms[1]
    }

    pub fn arms(&self) -> &[DiscreteMeasure] {
        &self.arms
    }

    pub fn hull(&self) -> AmbiguitySet {
        AmbiguitySet::new(self.arms.clone()).expect("at least two arms")
    }
}

/// Envelope parameters of the arm hull.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditEnvelope {
    pub means: MeanBounds,
    pub sigma2_low: f64,
    /// The reported upper variance: the closed form when it applies, the
    /// general envelope otherwise.
    pub sigma2_high: f64,
    /// Two-arm closed-form value of the upper variance, before any check.
    pub closed_form_sigma2_high: Option<f64>,
    /// Whether the closed form's minimising mean lies in `[μ̲, μ̄]`.
    pub closed_form_applies: bool,
    pub envelope: VarianceEnvelope,
}

/// Two-arm closed forms with a check against the mean interval.
///
/// For `μ_L ≠ μ_R` the upper variance formula is
/// `¼[(μ_L−μ_R)² + ((σ²_L−σ²_R)/(μ_L−μ_R))²] + (σ²_L+σ²_R)/2`, the value of
/// `max_j σ²_j + (μ_j − μ)²` at the crossing
/// `μ* = (μ_L+μ_R)/2 + (σ²_L−σ²_R)/(2(μ_L−μ_R))`. When `μ*` leaves the mean
/// interval the formula overshoots, and the general envelope is reported.
pub fn bandit_envelope(arms: &BanditArms) -> BanditEnvelope {
    let hull = arms.hull();
    let env = variance::envelope(&hull);
    let means = hull.mean_bounds();
    if arms.arms.len() != 2 {
        return BanditEnvelope {
            means,
            sigma2_low: env.lower,
            sigma2_high: env.upper,
            closed_form_sigma2_high: None,
            closed_form_applies: false,
            envelope: env,
        };
    }
    let (ml, mr) = (arms.left().mean(), arms.right().mean());
    let (vl, vr) = (variance_of(arms.left()), variance_of(arms.right()));
    let sigma2_low = vl.min(vr);
    let (closed, applies) = if ml == mr {
        (vl.max(vr), true)
    } else {
        let (dm, dv) = (ml - mr, vl - vr);
        let value = 0.25 * (dm * dm + (dv / dm) * (dv / dm)) + 0.5 * (vl + vr);
        let mu_star = 0.5 * (ml + mr) + dv / (2.0 * dm);
        (value, means.contains(mu_star))
    };
    BanditEnvelope {
        means,
        sigma2_low,
        sigma2_high: if applies { closed } else { env.upper },
        closed_form_sigma2_high: Some(closed),
        closed_form_applies: applies,
        envelope: env,
    }
}

/// Arm index; 0 is L and 1 is R.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Arm(pub usize);

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => f.write_str("L"),
            1 => f.write_str("R"),
            k => write!(f, "{k}"),
        }
    }
}

/// Arm choice at one reachable state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    /// Round, starting at 1.
    pub round: usize,
    /// Reward sum before the round.
    pub sum: f64,
    /// Running maximum of the reward sums, for sum-and-max functionals.
    pub max: Option<f64>,
    pub arm: Arm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyValue {
    pub value: f64,
    pub decisions: Vec<Decision>,
}

impl StrategyValue {
    /// `round,sum,max,arm` rows.
    pub fn decisions_csv(&self) -> String {
        let mut out = String::from("round,sum,max,arm\n");
        for d in &self.decisions {
            let max = d.max.map(fmt17).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", d.round, fmt17(d.sum), max, d.arm);
        }
        out
    }
}

fn key(x: f64) -> i64 {
    (x / STATE_RESOLUTION).round() as i64
}

/// A reward state: the running sum and, when tracked, the running max.
#[derive(Debug, Clone, Copy)]
struct State {
    sum: f64,
    max: f64,
}

type StateKey = (i64, i64);

fn state_key(s: &State, track_max: bool) -> StateKey {
    (key(s.sum), if track_max { key(s.max) } else { 0 })
}

/// Best 0/1 strategy by backward induction over the reachable reward
/// states; ties go to the lower arm index.
pub fn optimal_strategy_value(
    arms: &BanditArms,
    n: usize,
    f: &PathFunctional,
    state_cap: usize,
) -> Result<StrategyValue, BanditError> {
    if n < 1 {
        return Err(BanditError::InvalidInput("n must be at least 1".into()));
    }
    let track_max = matches!(f, PathFunctional::TerminalAndMax { .. });
    let step = |s: &State, x: f64| {
        let sum = s.sum + x;
        State { sum, max: s.max.max(sum) }
    };

    // Forward pass: reachable states per round, ordered by key.
    let mut layers: Vec<Vec<State>> = vec![vec![State { sum: 0.0, max: 0.0 }]];
    for round in 1..=n {
        let mut next: BTreeMap<StateKey, State> = BTreeMap::new();
        for s in &layers[round - 1] {
            for arm in &arms.arms {
                for &x in arm.atoms() {
                    let t = step(s, x);
                    next.entry(state_key(&t, track_max)).or_insert(t);
                }
            }
            if next.len() > state_cap {
                return Err(BanditError::StateSpaceOverflow {
                    round,
                    states: next.len(),
                    cap: state_cap,
                });
            }
        }
        layers.push(next.into_values().collect());
    }

    // Backward pass.
    let mut values: Vec<f64> = layers[n].iter().map(|s| f.eval(s.sum, s.max)).collect();
    let mut decisions = Vec::new();
    for round in (1..=n).rev() {
        let next_layer = &layers[round];
        let index: BTreeMap<StateKey, usize> = next_layer
            .iter()
            .enumerate()
            .map(|(i, s)| (state_key(s, track_max), i))
            .collect();
        let choices: Vec<(f64, Arm)> = layers[round - 1]
            .par_iter()
            .map(|s| {
                let mut best = (f64::NEG_INFINITY, Arm(0));
                for (j, arm) in arms.arms.iter().enumerate() {
                    let v = arm.expect(|x| values[index[&state_key(&step(s, x), track_max)]]);
                    if v > best.0 {
                        best = (v, Arm(j));
                    }
                }
                best
            })
            .collect();
        for (s, (_, arm)) in layers[round - 1].iter().zip(&choices).rev() {
            decisions.push(Decision {
                round,
                sum: s.sum,
                max: track_max.then_some(s.max),
                arm: *arm,
            });
        }
        values = choices.into_iter().map(|c| c.0).collect();
    }
    decisions.reverse();
    Ok(StrategyValue {
        value: values[0],
        decisions,
    })
}

/// Strategy-restricted DP, hull DP and G-heat limit for one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditCltRow {
    pub n: usize,
    /// Centered DP where each round's kernel is one arm's law.
    pub strategy_dp: f64,
    /// Centered DP over the whole hull.
    pub hull_dp: f64,
    /// `E_G[φ(ξ)]` with the bandit envelope.
    pub pde_limit: f64,
    pub strategy_le_hull: bool,
}

impl CsvRow for BanditCltRow {
    fn header() -> &'static str {
        "n,strategy_dp,hull_dp,pde_limit,strategy_le_hull"
    }
    fn write_fields(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            self.n,
            fmt17(self.strategy_dp),
            fmt17(self.hull_dp),
            fmt17(self.pde_limit),
            self.strategy_le_hull
        );
    }
}

pub fn bandit_clt(
    arms: &BanditArms,
    phi: &PiecewiseFunction,
    n_list: &[usize],
    cfg: &ExperimentConfig,
) -> Result<Vec<BanditCltRow>, BanditError> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || ns[0] == 0 {
        return Err(BanditError::InvalidInput("n_list must contain positive step counts".into()));
    }
    let hull = arms.hull();
    let env = bandit_envelope(arms);
    let pde_limit = if env.sigma2_high > 0.0 {
        let p = GNormalParams::new(env.sigma2_low, env.sigma2_high).map_err(ExperimentError::from)?;
        gheat::g_expectation(phi, &p, &cfg.pde(&p)).map_err(ExperimentError::from)?
    } else {
        phi.eval(0.0)
    };
    let f = PathFunctional::Terminal(phi.clone());
    ns.par_iter()
        .map(|&n| {
            let base = cfg.dp(n, Normalization::CltCentered);
            let strategy = dynamics::dp_upper_expectation(&hull, &f, &base.clone().with_kernels(KernelSet::Extremes))
                .map_err(ExperimentError::from)?;
            let full = dynamics::dp_upper_expectation(&hull, &f, &base.with_kernels(KernelSet::Hull))
                .map_err(ExperimentError::from)?;
            Ok(BanditCltRow {
                n,
                strategy_dp: strategy,
                hull_dp: full,
                pde_limit,
                strategy_le_hull: strategy <= full,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arms() -> BanditArms {
        BanditArms::new(
            DiscreteMeasure::uniform(&[0.0, 1.0]).unwrap(),
            DiscreteMeasure::uniform(&[0.0, 2.0]).unwrap(),
        )
    }

    #[test]
    fn closed_form_and_its_range_check() {
        let e = bandit_envelope(&arms());
        assert_eq!(e.closed_form_sigma2_high, Some(1.25));
        assert!(!e.closed_form_applies);
        assert!((e.sigma2_high - 1.0).abs() < 1e-12);
        assert_eq!(e.sigma2_low, 0.25);
        assert_eq!((e.means.lower, e.means.upper), (0.5, 1.0));
    }

    #[test]
    fn equal_means_take_the_larger_variance() {
        let a = BanditArms::new(
            DiscreteMeasure::uniform(&[-1.0, 1.0]).unwrap(),
            DiscreteMeasure::uniform(&[-2.0, 2.0]).unwrap(),
        );
        let e = bandit_envelope(&a);
        assert!(e.closed_form_applies);
        assert_eq!((e.sigma2_low, e.sigma2_high), (1.0, 4.0));
    }

    #[test]
    fn closed_form_matches_when_crossing_is_inside() {
        let a = BanditArms::new(
            DiscreteMeasure::uniform(&[-1.0, 1.0]).unwrap(),
            DiscreteMeasure::uniform(&[0.5, 1.5]).unwrap(),
        );
        let e = bandit_envelope(&a);
        assert!(e.closed_form_applies);
        assert!((e.sigma2_high - e.envelope.upper).abs() < 1e-12);
    }

    #[test]
    fn terminal_sum_picks_the_better_arm() {
        let f = PathFunctional::Terminal(PiecewiseFunction::identity());
        let v = optimal_strategy_value(&arms(), 4, &f, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(v.value, 4.0);
        assert!(v.decisions.iter().all(|d| d.arm == Arm(1)));
        let v = optimal_strategy_value(&arms(), 4, &f.neg(), DEFAULT_STATE_CAP).unwrap();
        assert_eq!(v.value, -2.0);
    }

    #[test]
    fn identical_arms_tie_to_left() {
        let m = DiscreteMeasure::uniform(&[0.0, 1.0]).unwrap();
        let a = BanditArms::new(m.clone(), m);
        let f = PathFunctional::Terminal(PiecewiseFunction::Square);
        let v = optimal_strategy_value(&a, 3, &f, DEFAULT_STATE_CAP).unwrap();
        assert!(v.decisions.iter().all(|d| d.arm == Arm(0)));
        assert!((v.value - (0.75 + 2.25)).abs() < 1e-12);
    }

    #[test]
    fn overflow_is_reported() {
        let f = PathFunctional::Terminal(PiecewiseFunction::Abs);
        let a = BanditArms::new(
            DiscreteMeasure::uniform(&[0.0, 1.0]).unwrap(),
            DiscreteMeasure::uniform(&[0.0, std::f64::consts::PI]).unwrap(),
        );
        assert!(matches!(
            optimal_strategy_value(&a, 12, &f, 20),
            Err(BanditError::StateSpaceOverflow { .. })
        ));
    }
}
