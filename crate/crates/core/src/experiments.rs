//! Convergence experiments for the limit theorems.
//!
//! Each experiment pairs a finite-`n` worst-case value computed by the
//! kernel dynamic program (or an exact recursion) with its limit computed
//! from the G-heat equation or a closed form.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{self, substream, DPConfig, DynamicsError, Normalization, PathFunctional};
use crate::function::PiecewiseFunction;
use crate::gheat::{self, GHeatError, GNormalParams, PDEConfig};
use crate::grid::fmt17;
use crate::measures::{AmbiguitySet, DiscreteMeasure, MeasureError};
use crate::sum::mean_and_stderr;
use crate::variance::{self, VarianceError};
use rand::Rng;

/// Default cap on the number of integer states in the counterexample
/// recursion.
pub const DEFAULT_STATE_CAP: usize = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    GHeat(#[from] GHeatError),
    #[error(transparent)]
    Variance(#[from] VarianceError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("StateSpaceOverflow: {states} reachable states exceed the cap of {cap}; reduce K_max or n")]
    StateSpaceOverflow { states: usize, cap: usize },
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
}

/// Named ambiguity sets used by the reproducible experiment catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `hull{U{−1,1}, U{−2,2}}`: zero mean, variances in `[1, 4]`.
    ZeroMeanUniforms,
    /// `hull{U{0,2}, U{−2,0}}`: means in `[−1, 1]`, variances in `[1, 2]`.
    MeanUncertain,
    /// `hull{δ₀, δ₁}`: means in `[0, 1]`, variances in `[0, 1/4]`.
    Binary,
    /// `hull{Bernoulli(½) on {0,1}, U{0,2}}`, the bandit arms.
    TwoPoint,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::ZeroMeanUniforms,
        Preset::MeanUncertain,
        Preset::Binary,
        Preset::TwoPoint,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ZeroMeanUniforms => "zero-mean-uniforms",
            Self::MeanUncertain => "mean-uncertain",
            Self::Binary => "binary",
            Self::TwoPoint => "two-point",
        }
    }

    pub fn ambiguity_set(self) -> AmbiguitySet {
        let u = |pts: &[f64]| DiscreteMeasure::uniform(pts).expect("preset atoms");
        let gens = match self {
            Self::ZeroMeanUniforms => vec![u(&[-1.0, 1.0]), u(&[-2.0, 2.0])],
            Self::MeanUncertain => vec![u(&[0.0, 2.0]), u(&[-2.0, 0.0])],
            Self::Binary => vec![u(&[0.0]), u(&[1.0])],
            Self::TwoPoint => vec![u(&[0.0, 1.0]), u(&[0.0, 2.0])],
        };
        AmbiguitySet::new(gens).expect("preset generators")
    }
}

/// Grid settings shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub state_step: f64,
    pub simplex_resolution: f64,
    pub state_halfwidth: Option<f64>,
    pub refinement_tolerance: Option<f64>,
    pub pde_dx: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            state_step: 0.01,
            simplex_resolution: 1.0 / 64.0,
            state_halfwidth: None,
            refinement_tolerance: None,
            pde_dx: 0.01,
        }
    }
}

impl ExperimentConfig {
    pub fn dp(&self, n: usize, normalization: Normalization) -> DPConfig {
        DPConfig {
            n,
            state_step: self.state_step,
            state_halfwidth: self.state_halfwidth,
            simplex_resolution: self.simplex_resolution,
            normalization,
            kernels: dynamics::KernelSet::Auto,
            refinement_tolerance: self.refinement_tolerance,
        }
    }

    pub fn pde(&self, p: &GNormalParams) -> PDEConfig {
        PDEConfig::for_params(p, self.pde_dx)
    }
}

/// One line of a CSV table.
pub trait CsvRow {
    fn header() -> &'static str;
    fn write_fields(&self, out: &mut String);
}

/// Renders rows with a header line; floats carry 17 significant digits.
pub fn to_csv<R: CsvRow>(rows: &[R]) -> String {
    let mut out = String::from(R::header());
    out.push('\n');
    for r in rows {
        r.write_fields(&mut out);
        out.push('\n');
    }
    out
}

fn join(out: &mut String, n: usize, values: &[f64]) {
    let _ = write!(out, "{n}");
    for v in values {
        let _ = write!(out, ",{}", fmt17(*v));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dp_value: f64,
    pub limit_value: f64,
    pub gap: f64,
}

impl ConvergenceRow {
    pub fn new(n: usize, dp_value: f64, limit_value: f64) -> Self {
        Self {
            n,
            dp_value,
            limit_value,
            gap: (dp_value - limit_value).abs(),
        }
    }
}

impl CsvRow for ConvergenceRow {
    fn header() -> &'static str {
        "n,dp_value,limit_value,gap"
    }
    fn write_fields(&self, out: &mut String) {
        join(out, self.n, &[self.dp_value, self.limit_value, self.gap]);
    }
}

fn sorted_unique(n_list: &[usize]) -> Result<Vec<usize>, ExperimentError> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || ns[0] == 0 {
        return Err(ExperimentError::InvalidInput("n_list must contain positive step counts".into()));
    }
    Ok(ns)
}

/// `E_G[φ(ξ)]` for `ξ ~ N(0, [V̲, V̄])`, or `φ(0)` when `V̄ = 0`.
pub fn clt_limit(a: &AmbiguitySet, phi: &PiecewiseFunction, cfg: &ExperimentConfig) -> Result<f64, ExperimentError> {
    let env = variance::envelope(a);
    if env.upper <= 0.0 {
        return Ok(phi.eval(0.0));
    }
    let p = GNormalParams::from_envelope(&env)?;
    Ok(gheat::g_expectation(phi, &p, &cfg.pde(&p))?)
}

/// Centered DP value versus the G-heat limit for each `n`.
pub fn run_clt(
    a: &AmbiguitySet,
    phi: &PiecewiseFunction,
    n_list: &[usize],
    cfg: &ExperimentConfig,
) -> Result<Vec<ConvergenceRow>, ExperimentError> {
    let ns = sorted_unique(n_list)?;
    let limit = clt_limit(a, phi, cfg)?;
    let f = PathFunctional::Terminal(phi.clone());
    ns.par_iter()
        .map(|&n| {
            let dp = dynamics::dp_upper_expectation(a, &f, &cfg.dp(n, Normalization::CltCentered))?;
            Ok(ConvergenceRow::new(n, dp, limit))
        })
        .collect()
}

/// Capacity of `[a, b]`: DP and limit brackets from the squeeze functions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityRow {
    pub n: usize,
    /// Midpoint of the DP bracket.
    pub dp_value: f64,
    /// Closed form when `a = −∞`, else the midpoint of the PDE bracket.
    pub limit_value: f64,
    pub gap: f64,
    pub dp_lower: f64,
    pub dp_upper: f64,
    pub limit_lower: f64,
    pub limit_upper: f64,
    /// Whether `limit_value` lies in `[limit_lower, limit_upper]`.
    pub limit_in_bracket: bool,
    /// Whether the DP and limit brackets intersect.
    pub brackets_overlap: bool,
}

impl CsvRow for CapacityRow {
    fn header() -> &'static str {
        "n,dp_value,limit_value,gap,dp_lower,dp_upper,limit_lower,limit_upper,limit_in_bracket,brackets_overlap"
    }
    fn write_fields(&self, out: &mut String) {
        join(
            out,
            self.n,
            &[
                self.dp_value,
                self.limit_value,
                self.gap,
                self.dp_lower,
                self.dp_upper,
                self.limit_lower,
                self.limit_upper,
            ],
        );
        let _ = write!(out, ",{},{}", self.limit_in_bracket, self.brackets_overlap);
    }
}

pub fn run_capacity_clt(
    a_set: &AmbiguitySet,
    a: f64,
    b: f64,
    eps: f64,
    n_list: &[usize],
    cfg: &ExperimentConfig,
) -> Result<Vec<CapacityRow>, ExperimentError> {
    let ns = sorted_unique(n_list)?;
    let (g, f) = gheat::capacity_squeeze(a, b, eps)?;
    let env = variance::envelope(a_set);
    let p = GNormalParams::from_envelope(&env)?;
    let pde = PDEConfig::for_params(&p, cfg.pde_dx.min(0.25 * eps));
    let (limit_lower, limit_upper) = gheat::interval_capacity_with(&p, a, b, eps, &pde)?;
    let limit_value = if a == f64::NEG_INFINITY {
        if b == f64::INFINITY {
            1.0
        } else {
            match gheat::g_normal_cdf(&p, b) {
                Ok(v) => v,
                Err(GHeatError::DegenerateSigmaLow { limit, .. }) => limit,
                Err(e) => return Err(e.into()),
            }
        }
    } else {
        0.5 * (limit_lower + limit_upper)
    };
    let (fg, ff) = (PathFunctional::Terminal(g), PathFunctional::Terminal(f));
    ns.par_iter()
        .map(|&n| {
            let dcfg = cfg.dp(n, Normalization::CltCentered);
            let dp_lower = dynamics::dp_upper_expectation(a_set, &fg, &dcfg)?;
            let dp_upper = dynamics::dp_upper_expectation(a_set, &ff, &dcfg)?;
            let dp_value = 0.5 * (dp_lower + dp_upper);
            Ok(CapacityRow {
                n,
                dp_value,
                limit_value,
                gap: (dp_value - limit_value).abs(),
                dp_lower,
                dp_upper,
                limit_lower,
                limit_upper,
                limit_in_bracket: limit_lower <= limit_value && limit_value <= limit_upper,
                brackets_overlap: dp_lower <= limit_upper && limit_lower <= dp_upper,
            })
        })
        .collect()
}

/// LLN row with the distance-to-mean-interval diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnRow {
    pub n: usize,
    pub dp_value: f64,
    pub limit_value: f64,
    pub gap: f64,
    /// `Ê[d_Θ(S_n/n)]` with `Θ = [μ̲, μ̄]`.
    pub d_theta: f64,
}

impl CsvRow for LlnRow {
    fn header() -> &'static str {
        "n,dp_value,limit_value,gap,d_theta"
    }
    fn write_fields(&self, out: &mut String) {
        join(out, self.n, &[self.dp_value, self.limit_value, self.gap, self.d_theta]);
    }
}

/// `Ê[φ(S_n/n)]` versus `max_{μ̲ ≤ μ ≤ μ̄} φ(μ)`.
pub fn run_lln(
    a: &AmbiguitySet,
    phi: &PiecewiseFunction,
    n_list: &[usize],
    cfg: &ExperimentConfig,
) -> Result<Vec<LlnRow>, ExperimentError> {
    let ns = sorted_unique(n_list)?;
    let means = a.mean_bounds();
    let limit = phi.max_on_interval(means.lower, means.upper);
    let f = PathFunctional::Terminal(phi.clone());
    let d = PathFunctional::Terminal(PiecewiseFunction::distance_to_interval(means.lower, means.upper));
    ns.par_iter()
        .map(|&n| {
            let dcfg = cfg.dp(n, Normalization::LlnMean);
            let dp = dynamics::dp_upper_expectation(a, &f, &dcfg)?;
            let d_theta = dynamics::dp_upper_expectation(a, &d, &dcfg)?;
            Ok(LlnRow {
                n,
                dp_value: dp,
                limit_value: limit,
                gap: (dp - limit).abs(),
                d_theta,
            })
        })
        .collect()
}

/// The truncated heavy-tailed family `P_k({0}) = 1 − 1/k²`,
/// `P_k({±k}) = 1/(2k²)` for `k = 1, …, K_max`.
pub fn counterexample_set(k_max: usize) -> Result<AmbiguitySet, ExperimentError> {
    if k_max < 1 {
        return Err(ExperimentError::InvalidInput("K_max must be at least 1".into()));
    }
    let gens = (1..=k_max)
        .map(|k| {
            let k = k as f64;
            let tail = 0.5 / (k * k);
            DiscreteMeasure::new(vec![-k, 0.0, k], vec![tail, 1.0 - 2.0 * tail, tail])
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AmbiguitySet::new(gens)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub n: usize,
    /// `Ê[1 − |S_n/√n|]` by exact recursion.
    pub dp_value: f64,
    /// `E_G[1 − |ξ|]` with `ξ ~ N(0, 1)` from the G-heat solver.
    pub limit_value: f64,
    pub gap: f64,
    /// `1/(K_max·√n)`, the single-step truncation defect.
    pub truncation_defect: f64,
}

impl CsvRow for CounterexampleRow {
    fn header() -> &'static str {
        "n,dp_value,limit_value,gap,truncation_defect"
    }
    fn write_fields(&self, out: &mut String) {
        join(out, self.n, &[self.dp_value, self.limit_value, self.gap, self.truncation_defect]);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub k_max: usize,
    pub rows: Vec<CounterexampleRow>,
    /// `Ê[X²]` over the truncated family.
    pub upper_second_moment: f64,
    /// `−Ê[−X²]` over the truncated family.
    pub lower_second_moment: f64,
}

/// `φ(x) = 1 − |x|`.
pub fn counterexample_phi() -> PiecewiseFunction {
    PiecewiseFunction::Abs.neg().add_constant(1.0)
}

/// Exact backward recursion over the integer sums reachable in `n` steps.
pub fn counterexample_value(k_max: usize, n: usize, state_cap: usize) -> Result<f64, ExperimentError> {
    if k_max < 1 || n < 1 {
        return Err(ExperimentError::InvalidInput("K_max and n must be at least 1".into()));
    }
    let states = 2 * n * k_max + 1;
    if states > state_cap {
        return Err(ExperimentError::StateSpaceOverflow { states, cap: state_cap });
    }
    let sqrt_n = (n as f64).sqrt();
    // v[j] holds the value at integer sum j − offset, |j − offset| ≤ i·K.
    let width = |i: usize| i * k_max;
    let mut v: Vec<f64> = (0..=2 * width(n))
        .map(|j| 1.0 - ((j as f64 - width(n) as f64) / sqrt_n).abs())
        .collect();
    for i in (0..n).rev() {
        let (w, w_next) = (width(i) as isize, width(i + 1) as isize);
        let prev = &v;
        let next: Vec<f64> = (0..(2 * w + 1) as usize)
            .into_par_iter()
            .map(|j| {
                let centre = (j as isize - w + w_next) as usize;
                let mut best = f64::NEG_INFINITY;
                for k in 1..=k_max {
                    let kk = (k * k) as f64;
                    let stay = (1.0 - 1.0 / kk) * prev[centre];
                    let jump = 0.5 / kk * (prev[centre - k] + prev[centre + k]);
                    let val = stay + jump;
                    if val > best {
                        best = val;
                    }
                }
                best
            })
            .collect();
        v = next;
    }
    Ok(v[0])
}

pub fn run_counterexample(
    k_max: usize,
    n_list: &[usize],
    state_cap: usize,
    pde_dx: f64,
) -> Result<CounterexampleReport, ExperimentError> {
    let ns = sorted_unique(n_list)?;
    let set = counterexample_set(k_max)?;
    let upper_second_moment = set.upper_expectation(&PiecewiseFunction::Square)?;
    let lower_second_moment = set.lower_expectation(&PiecewiseFunction::Square)?;
    let p = GNormalParams::new(1.0, 1.0)?;
    let phi = counterexample_phi();
    let limit = gheat::g_expectation(&phi, &p, &PDEConfig::for_params(&p, pde_dx))?;
    let rows = ns
        .iter()
        .map(|&n| {
            let value = counterexample_value(k_max, n, state_cap)?;
            Ok(CounterexampleRow {
                n,
                dp_value: value,
                limit_value: limit,
                gap: (value - limit).abs(),
                truncation_defect: 1.0 / (k_max as f64 * (n as f64).sqrt()),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(CounterexampleReport {
        k_max,
        rows,
        upper_second_moment,
        lower_second_moment,
    })
}

/// Adapted volatility `f(t, path)` with values in `[√V̲, √V̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VolatilitySpec {
    Constant(f64),
    /// `σ̄` while the current sum exceeds the threshold, `σ̲` otherwise.
    BangBang(f64),
}

impl VolatilitySpec {
    pub fn render(&self) -> String {
        match self {
            Self::Constant(s) => format!("constant({s})"),
            Self::BangBang(t) => format!("bang_bang({t})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `E[φ(S_n)]` when every step draws from the hull
/// member whose variance is `f(t_{i−1}, path)²`.
pub fn run_volatility_mc(
    a: &AmbiguitySet,
    f: VolatilitySpec,
    phi: &PiecewiseFunction,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<McEstimate, ExperimentError> {
    if n < 1 {
        return Err(ExperimentError::InvalidInput("n must be at least 1".into()));
    }
    if paths < 1000 {
        return Err(ExperimentError::InvalidInput(format!("paths must be at least 1000, got {paths}")));
    }
    let env = variance::envelope(a);
    // Kernels indexed by the volatility regime; the threshold is `∞` for a
    // constant volatility so index 0 is always used.
    let (kernels, threshold) = match f {
        VolatilitySpec::Constant(sigma) => (vec![env.achieve(a, sigma * sigma)?.measure], f64::INFINITY),
        VolatilitySpec::BangBang(t) => (
            vec![env.achieve(a, env.lower)?.measure, env.achieve(a, env.upper)?.measure],
            t,
        ),
    };
    let centered: Vec<(DiscreteMeasure, f64)> = kernels
        .into_iter()
        .map(|m| {
            let mean = m.mean();
            (m, mean)
        })
        .collect();
    let scale = 1.0 / (n as f64).sqrt();
    let samples: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut rng = substream(seed, path);
            let mut s = 0.0;
            for _ in 0..n {
                let (m, mean) = &centered[usize::from(s > threshold)];
                s += (m.quantile(rng.random()) - mean) * scale;
            }
            phi.eval(s)
        })
        .collect();
    let (estimate, stderr) = mean_and_stderr(&samples);
    Ok(McEstimate { estimate, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        ExperimentConfig {
            state_step: 0.02,
            pde_dx: 0.02,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn presets_round_trip() {
        for p in Preset::ALL {
            assert_eq!(Preset::parse(p.name()), Some(p));
        }
        let b = Preset::Binary.ambiguity_set();
        let env = variance::envelope(&b);
        assert_eq!((env.lower, env.upper), (0.0, 0.25));
    }

    #[test]
    fn point_mass_clt_is_phi_at_zero() {
        let a = AmbiguitySet::singleton(DiscreteMeasure::dirac(3.0).unwrap());
        let rows = run_clt(&a, &PiecewiseFunction::tent(-1.0, 1.0), &[5, 2], &quick()).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![2, 5]);
        for r in rows {
            assert!((r.dp_value - 1.0).abs() < 1e-12 && r.limit_value == 1.0);
        }
    }

    #[test]
    fn lln_identity_and_interior_peak() {
        let a = Preset::MeanUncertain.ambiguity_set();
        let rows = run_lln(&a, &PiecewiseFunction::identity(), &[1, 7], &quick()).unwrap();
        for r in &rows {
            assert!((r.dp_value - 1.0).abs() < 1e-12 && r.limit_value == 1.0);
        }
        let tip = PiecewiseFunction::Custom(
            crate::function::PiecewiseLinear::new(vec![(0.25, 0.0)], 1.0, -1.0).unwrap(),
        );
        let rows = run_lln(&a, &tip, &[3], &quick()).unwrap();
        assert_eq!(rows[0].limit_value, 0.0);
    }

    #[test]
    fn counterexample_single_step() {
        let v = counterexample_value(1000, 1, DEFAULT_STATE_CAP).unwrap();
        assert!((v - 0.999).abs() < 1e-12);
        assert!(matches!(
            counterexample_value(1000, 4, 100),
            Err(ExperimentError::StateSpaceOverflow { .. })
        ));
        let set = counterexample_set(50).unwrap();
        assert!((set.upper_expectation(&PiecewiseFunction::Square).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_half_line_limits() {
        let a = Preset::ZeroMeanUniforms.ambiguity_set();
        let rows = run_capacity_clt(&a, f64::NEG_INFINITY, 0.0, 0.1, &[4], &quick()).unwrap();
        assert!((rows[0].limit_value - 2.0 / 3.0).abs() < 1e-15);
        let s = AmbiguitySet::singleton(DiscreteMeasure::uniform(&[-1.0, 1.0]).unwrap());
        let rows = run_capacity_clt(&s, f64::NEG_INFINITY, 0.0, 0.1, &[4], &quick()).unwrap();
        assert!((rows[0].limit_value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mc_rejects_out_of_envelope_volatility() {
        let a = Preset::ZeroMeanUniforms.ambiguity_set();
        let err = run_volatility_mc(&a, VolatilitySpec::Constant(3.0), &PiecewiseFunction::Square, 10, 1000, 1);
        assert!(matches!(err, Err(ExperimentError::Variance(_))));
    }

    #[test]
    fn csv_header_and_integer_n() {
        let csv = to_csv(&[ConvergenceRow::new(10, 1.0, 0.5)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("n,dp_value,limit_value,gap"));
        assert!(lines.next().unwrap().starts_with("10,1.0000000000000000e0,"));
    }
}
