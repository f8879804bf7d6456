//! Worst-case kernel dynamic programming.
//!
//! The value `sup_P E_P[F(Ŝ)]` over all joint laws built from kernels with
//! values in the hull is computed by backward induction on a uniform state
//! grid. At every step the one-step operator takes the supremum over mixing
//! weights `λ` of the expectation of the next value under `mix(A, λ)`. The
//! increment is optionally centered by the conditional mean `m(λ)` and
//! scaled by the normalisation.
//!
//! Off-grid values are read by linear interpolation (linear extrapolation
//! outside the grid), which keeps the scheme monotone and exact on affine
//! functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::function::PiecewiseFunction;
use crate::grid::{Axis, ValueFunction};
use crate::measures::{canonicalize, simplex_grid, AmbiguitySet, DiscreteMeasure, MeasureError, SimplexWeight};
use crate::sum::pairwise_sum_by;
use crate::variance;

/// Node count per rayon task.
const CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("IndexOutOfRange: t = {t} is outside [0, 1]")]
    IndexOutOfRange { t: f64 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("GridTooCoarse: refinement moved the value from {coarse} to {fine} (tolerance {tolerance})")]
    GridTooCoarse { coarse: f64, fine: f64, tolerance: f64 },
    #[error("StateEscape: state grid halfwidth {configured} is below the required {required}")]
    StateEscape { configured: f64, required: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// How partial sums are normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(1/√n) Σ (X_j − E[X_j | F_{j−1}])`
    CltCentered,
    /// `(1/n) Σ X_j`
    LlnMean,
    /// `Σ X_j`
    Raw,
}

impl Normalization {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clt_centered" | "clt" => Some(Self::CltCentered),
            "lln_mean" | "lln" => Some(Self::LlnMean),
            "raw" => Some(Self::Raw),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CltCentered => "clt_centered",
            Self::LlnMean => "lln_mean",
            Self::Raw => "raw",
        }
    }

    pub fn scale(self, n: usize) -> f64 {
        match self {
            Self::CltCentered => 1.0 / (n as f64).sqrt(),
            Self::LlnMean => 1.0 / n as f64,
            Self::Raw => 1.0,
        }
    }
}

/// Which mixing weights the one-step supremum ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSet {
    /// Simplex grid when centered, generators otherwise.
    Auto,
    /// Full simplex grid.
    Hull,
    /// Generators only.
    Extremes,
}

/// Dynamic-programming configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DPConfig {
    pub n: usize,
    pub state_step: f64,
    /// `None` picks a default from the ambiguity set.
    pub state_halfwidth: Option<f64>,
    pub simplex_resolution: f64,
    pub normalization: Normalization,
    pub kernels: KernelSet,
    /// When set, the run is repeated with halved grid spacings and
    /// [`DynamicsError::GridTooCoarse`] is returned if the two differ by more.
    pub refinement_tolerance: Option<f64>,
}

impl DPConfig {
    pub fn new(n: usize, normalization: Normalization) -> Self {
        Self {
            n,
            state_step: 0.01,
            state_halfwidth: None,
            simplex_resolution: 1.0 / 64.0,
            normalization,
            kernels: KernelSet::Auto,
            refinement_tolerance: None,
        }
    }

    pub fn with_state_step(mut self, step: f64) -> Self {
        self.state_step = step;
        self
    }

    pub fn with_halfwidth(mut self, halfwidth: f64) -> Self {
        self.state_halfwidth = Some(halfwidth);
        self
    }

    pub fn with_simplex_resolution(mut self, resolution: f64) -> Self {
        self.simplex_resolution = resolution;
        self
    }

    pub fn with_kernels(mut self, kernels: KernelSet) -> Self {
        self.kernels = kernels;
        self
    }

    pub fn with_refinement_tolerance(mut self, tol: f64) -> Self {
        self.refinement_tolerance = Some(tol);
        self
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        if self.n < 1 {
            return Err(DynamicsError::InvalidConfig("n must be at least 1".into()));
        }
        if !(self.state_step > 0.0) || !self.state_step.is_finite() {
            return Err(DynamicsError::InvalidConfig("state_step must be positive".into()));
        }
        if !(self.simplex_resolution > 0.0 && self.simplex_resolution <= 1.0) {
            return Err(DynamicsError::InvalidConfig("simplex_resolution must lie in (0, 1]".into()));
        }
        if let Some(h) = self.state_halfwidth {
            if !(h > 0.0) {
                return Err(DynamicsError::InvalidConfig("state_halfwidth must be positive".into()));
            }
        }
        Ok(())
    }

    /// Smallest halfwidth for which no reachable probability mass leaves
    /// the grid (uncentered modes) or the grid covers four upper standard
    /// deviations plus one increment (centered mode).
    pub fn required_halfwidth(&self, a: &AmbiguitySet) -> f64 {
        let n = self.n as f64;
        match self.normalization {
            Normalization::CltCentered => {
                let vbar = variance::upper_variance(a).0;
                4.0 * vbar.sqrt() + (a.max_atom() - a.min_atom()) / n.sqrt()
            }
            Normalization::LlnMean => a.max_abs_atom() + self.state_step,
            Normalization::Raw => n * a.max_abs_atom() + self.state_step,
        }
    }

    /// Default halfwidth: `6√V̄` plus one increment when centered, the full
    /// reachable range plus two cells otherwise.
    pub fn default_halfwidth(&self, a: &AmbiguitySet) -> f64 {
        let n = self.n as f64;
        match self.normalization {
            Normalization::CltCentered => {
                let vbar = variance::upper_variance(a).0;
                (6.0 * vbar.sqrt() + (a.max_atom() - a.min_atom()) / n.sqrt()).max(self.state_step)
            }
            Normalization::LlnMean => a.max_abs_atom() + 2.0 * self.state_step,
            Normalization::Raw => n * a.max_abs_atom() + 2.0 * self.state_step,
        }
    }

    fn halfwidth(&self, a: &AmbiguitySet) -> f64 {
        self.state_halfwidth.unwrap_or_else(|| self.default_halfwidth(a))
    }

    fn centered(&self) -> bool {
        self.normalization == Normalization::CltCentered
    }
}

/// Functional of the interpolated path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PathFunctional {
    /// `φ(Ŝ_1)`
    Terminal(PiecewiseFunction),
    /// `ψ(Ŝ_1, max_t Ŝ_t) = terminal(Ŝ_1) + running_max(max_t Ŝ_t)`
    TerminalAndMax {
        terminal: PiecewiseFunction,
        running_max: PiecewiseFunction,
    },
}

impl PathFunctional {
    pub fn neg(&self) -> Self {
        match self {
            Self::Terminal(f) => Self::Terminal(f.neg()),
            Self::TerminalAndMax { terminal, running_max } => Self::TerminalAndMax {
                terminal: terminal.neg(),
                running_max: running_max.neg(),
            },
        }
    }

    pub fn eval(&self, terminal_value: f64, running_max: f64) -> f64 {
        match self {
            Self::Terminal(f) => f.eval(terminal_value),
            Self::TerminalAndMax {
                terminal,
                running_max: g,
            } => terminal.eval(terminal_value) + g.eval(running_max),
        }
    }
}

/// Value of the interpolated path `x̂_t` at `t`, with `x_0 = 0` implicit.
pub fn interpolate_path(x: &[f64], t: f64, n: usize) -> Result<f64, DynamicsError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(DynamicsError::IndexOutOfRange { t });
    }
    if x.len() != n {
        return Err(DynamicsError::InvalidConfig(format!("path has {} points, expected {n}", x.len())));
    }
    let node = |i: usize| if i == 0 { 0.0 } else { x[i - 1] };
    let nt = n as f64 * t;
    let k = (nt.floor() as usize).min(n);
    if k == n {
        return Ok(node(n));
    }
    let frac = nt - k as f64;
    Ok((1.0 - frac) * node(k) + frac * node(k + 1))
}

/// One backward step at state `s`:
/// `Σ_j λ_j Σ_{a ∈ P_j} p · V_next(s + (a − m(λ))·scale)`.
pub fn centered_step(v_next: &ValueFunction, s: f64, lambda: &SimplexWeight, scale: f64, a: &AmbiguitySet) -> f64 {
    let m = a.mixture_mean(lambda);
    let lam = lambda.as_slice();
    pairwise_sum_by(a.len(), |j| {
        let p = &a.extremes()[j];
        lam[j] * p.expect(|x| v_next.eval(s + (x - m) * scale))
    })
}

/// Law of the centered increment `X − m(λ)` under `mix(A, λ)`.
pub fn centered_increment(a: &AmbiguitySet, lambda: &SimplexWeight) -> Result<DiscreteMeasure, DynamicsError> {
    let mixed = a.mix(lambda)?;
    let m = a.mixture_mean(lambda);
    let atoms: Vec<f64> = mixed.atoms().iter().map(|x| x - m).collect();
    Ok(canonicalize(&atoms, mixed.weights())?)
}

/// Increment law of one candidate kernel, pre-resolved against the grid.
#[derive(Debug, Clone)]
struct Candidate {
    probs: Vec<f64>,
    /// Whole-cell part of each increment.
    shifts: Vec<isize>,
    /// Fractional cell part in `[0, 1)`.
    fracs: Vec<f64>,
}

impl Candidate {
    fn new(offsets: &[f64], probs: Vec<f64>, step: f64) -> Self {
        let mut shifts = Vec::with_capacity(offsets.len());
        let mut fracs = Vec::with_capacity(offsets.len());
        for &o in offsets {
            let u = o / step;
            let q = u.floor();
            shifts.push(q as isize);
            fracs.push(u - q);
        }
        Self { probs, shifts, fracs }
    }
}

fn build_candidates(a: &AmbiguitySet, cfg: &DPConfig) -> Vec<Candidate> {
    let scale = cfg.normalization.scale(cfg.n);
    let weights: Vec<SimplexWeight> = match (cfg.kernels, cfg.centered()) {
        (KernelSet::Extremes, _) | (KernelSet::Auto, false) => {
            (0..a.len()).map(|j| SimplexWeight::vertex(a.len(), j)).collect()
        }
        (KernelSet::Hull, _) | (KernelSet::Auto, true) => simplex_grid(a.len(), cfg.simplex_resolution),
    };
    weights
        .iter()
        .map(|lambda| {
            let m = if cfg.centered() { a.mixture_mean(lambda) } else { 0.0 };
            let mut offsets = Vec::new();
            let mut probs = Vec::new();
            for (l, p) in lambda.as_slice().iter().zip(a.extremes()) {
                if *l == 0.0 {
                    continue;
                }
                for (x, w) in p.atoms().iter().zip(p.weights()) {
                    offsets.push((x - m) * scale);
                    probs.push(l * w);
                }
            }
            Candidate::new(&offsets, probs, cfg.state_step)
        })
        .collect()
}

#[inline]
fn lerp_at(v: &[f64], pos: isize, frac: f64) -> f64 {
    let n = v.len() as isize;
    if pos >= 0 && pos + 1 < n {
        let i = pos as usize;
        return (1.0 - frac) * v[i] + frac * v[i + 1];
    }
    let u = pos as f64 + frac;
    let i = u.floor().clamp(0.0, (n - 2) as f64);
    let t = u - i;
    let i = i as usize;
    (1.0 - t) * v[i] + t * v[i + 1]
}

fn step_1d(v: &[f64], out: &mut [f64], candidates: &[Candidate]) {
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, slice)| {
        for (off, slot) in slice.iter_mut().enumerate() {
            let k = (chunk * CHUNK + off) as isize;
            let mut best = f64::NEG_INFINITY;
            for c in candidates {
                let val = pairwise_sum_by(c.probs.len(), |o| c.probs[o] * lerp_at(v, k + c.shifts[o], c.fracs[o]));
                if val > best {
                    best = val;
                }
            }
            *slot = best;
        }
    });
}

/// Two-axis value read at state position `u` (in state-index units) with
/// running max `max(m_j, s')`.
#[inline]
fn read_2d(v: &[f64], ns: usize, nm: usize, zero: isize, j: usize, pos: isize, frac: f64) -> f64 {
    let u = pos as f64 + frac;
    let m_pos = (j as isize + zero) as f64;
    if u <= m_pos {
        // Running max unchanged: interpolate along column j.
        let lo = u.floor().clamp(0.0, (ns - 2) as f64);
        let t = u - lo;
        let i = lo as usize;
        return (1.0 - t) * v[i * nm + j] + t * v[(i + 1) * nm + j];
    }
    // New maximum: the state sits on the diagonal m = s.
    let diag = |i: usize| {
        let jj = i as isize - zero;
        v[i * nm + jj as usize]
    };
    let first = zero as usize;
    let last = (ns - 1).min(zero as usize + nm - 1);
    if last == first {
        return diag(first);
    }
    let lo = u.floor().clamp(first as f64, (last - 1) as f64);
    let t = u - lo;
    let i = lo as usize;
    (1.0 - t) * diag(i) + t * diag(i + 1)
}

fn step_2d(v: &[f64], out: &mut [f64], ns: usize, nm: usize, zero: isize, candidates: &[Candidate]) {
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, slice)| {
        for (off, slot) in slice.iter_mut().enumerate() {
            let idx = chunk * CHUNK + off;
            let (k, j) = (idx / nm, idx % nm);
            let mut best = f64::NEG_INFINITY;
            for c in candidates {
                let val = pairwise_sum_by(c.probs.len(), |o| {
                    c.probs[o] * read_2d(v, ns, nm, zero, j, k as isize + c.shifts[o], c.fracs[o])
                });
                if val > best {
                    best = val;
                }
            }
            *slot = best;
        }
    });
}

/// Backward induction; returns the time-0 value function.
pub fn dp_value_function(a: &AmbiguitySet, f: &PathFunctional, cfg: &DPConfig) -> Result<ValueFunction, DynamicsError> {
    cfg.validate()?;
    let halfwidth = cfg.halfwidth(a);
    let required = cfg.required_halfwidth(a);
    if halfwidth < required {
        return Err(DynamicsError::StateEscape {
            configured: halfwidth,
            required,
        });
    }
    let axis = Axis::symmetric(halfwidth, cfg.state_step);
    let candidates = build_candidates(a, cfg);
    match f {
        PathFunctional::Terminal(phi) => {
            let mut v: Vec<f64> = axis.nodes().map(|x| phi.eval(x)).collect();
            let mut next = vec![0.0; v.len()];
            for _ in 0..cfg.n {
                step_1d(&v, &mut next, &candidates);
                std::mem::swap(&mut v, &mut next);
            }
            Ok(ValueFunction::new(axis, v))
        }
        PathFunctional::TerminalAndMax { .. } => {
            let max_axis = Axis::nonnegative(halfwidth, cfg.state_step);
            let (ns, nm) = (axis.len, max_axis.len);
            let zero = axis.nearest(0.0) as isize;
            let mut v = Vec::with_capacity(ns * nm);
            for s in axis.nodes() {
                for m in max_axis.nodes() {
                    v.push(f.eval(s, m.max(s)));
                }
            }
            let mut next = vec![0.0; v.len()];
            for _ in 0..cfg.n {
                step_2d(&v, &mut next, ns, nm, zero, &candidates);
                std::mem::swap(&mut v, &mut next);
            }
            Ok(ValueFunction {
                axis,
                max_axis: Some(max_axis),
                values: v,
            })
        }
    }
}

fn dp_value_at_origin(a: &AmbiguitySet, f: &PathFunctional, cfg: &DPConfig) -> Result<f64, DynamicsError> {
    let vf = dp_value_function(a, f, cfg)?;
    Ok(vf.at_node(0.0))
}

/// `sup_{P} E_P[F(Ŝ^{(n)})]` over all kernel-built joint laws.
pub fn dp_upper_expectation(a: &AmbiguitySet, f: &PathFunctional, cfg: &DPConfig) -> Result<f64, DynamicsError> {
    let coarse = dp_value_at_origin(a, f, cfg)?;
    if let Some(tolerance) = cfg.refinement_tolerance {
        let mut fine_cfg = cfg.clone();
        fine_cfg.state_step *= 0.5;
        fine_cfg.simplex_resolution *= 0.5;
        fine_cfg.refinement_tolerance = None;
        let fine = dp_value_at_origin(a, f, &fine_cfg)?;
        if (fine - coarse).abs() > tolerance {
            return Err(DynamicsError::GridTooCoarse { coarse, fine, tolerance });
        }
    }
    Ok(coarse)
}

/// `inf_{P} E_P[F(Ŝ^{(n)})] = −sup_P E_P[−F]`.
pub fn dp_lower_expectation(a: &AmbiguitySet, f: &PathFunctional, cfg: &DPConfig) -> Result<f64, DynamicsError> {
    Ok(-dp_upper_expectation(a, &f.neg(), cfg)?)
}

/// Kernel choice as a function of the step index (1-based) and the current
/// normalised state.
pub trait KernelPolicy: Sync {
    fn weights(&self, step: usize, state: f64) -> SimplexWeight;
}

/// The same mixing weights at every step.
#[derive(Debug, Clone)]
pub struct ConstantPolicy(pub SimplexWeight);

impl KernelPolicy for ConstantPolicy {
    fn weights(&self, _step: usize, _state: f64) -> SimplexWeight {
        self.0.clone()
    }
}

impl<F> KernelPolicy for F
where
    F: Fn(usize, f64) -> SimplexWeight + Sync,
{
    fn weights(&self, step: usize, state: f64) -> SimplexWeight {
        self(step, state)
    }
}

/// Seeded generator for replication `stream` of a run seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one path `(s_1, …, s_n)` of the centered normalised sum under the
/// kernels chosen by `policy`.
pub fn simulate_policy<P: KernelPolicy + ?Sized>(
    a: &AmbiguitySet,
    policy: &P,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, DynamicsError> {
    let mut rng = substream(seed, 0);
    simulate_policy_with(a, policy, n, &mut rng)
}

/// [`simulate_policy`] drawing from a caller-supplied generator.
pub fn simulate_policy_with<P: KernelPolicy + ?Sized, R: Rng>(
    a: &AmbiguitySet,
    policy: &P,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>, DynamicsError> {
    let scale = 1.0 / (n as f64).sqrt();
    let mut s = 0.0;
    let mut path = Vec::with_capacity(n);
    for i in 1..=n {
        let lambda = policy.weights(i, s);
        if lambda.len() != a.len() {
            return Err(MeasureError::DimensionMismatch {
                expected: a.len(),
                got: lambda.len(),
            }
            .into());
        }
        let m = a.mixture_mean(&lambda);
        let x = sample_mixture(a, &lambda, rng);
        s += (x - m) * scale;
        path.push(s);
    }
    Ok(path)
}

/// Two-stage draw from `mix(A, λ)`: generator first, then atom.
fn sample_mixture<R: Rng>(a: &AmbiguitySet, lambda: &SimplexWeight, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = a.len() - 1;
    for (j, l) in lambda.as_slice().iter().enumerate() {
        acc += l;
        if u < acc {
            pick = j;
            break;
        }
    }
    a.extremes()[pick].quantile(rng.random())
}
