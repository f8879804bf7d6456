//! G-heat equation and the G-normal distribution.
//!
//! `u(t, x) = Ê[φ(x + √(1−t)·ξ)]` with `ξ ~ N(0, [σ̲², σ̄²])` solves
//! `∂ₜu + G(∂²ₓₓu) = 0`, `u(1, ·) = φ`. The solver marches backward from
//! `t = 1` with the explicit scheme `u ← u + dt·G(D²u)`, which is monotone
//! when `dt ≤ dx²/σ̄²`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::function::PiecewiseFunction;
use crate::grid::{Axis, ValueFunction};
use crate::variance::VarianceEnvelope;

/// Grids at or above this size are stepped in parallel.
const PARALLEL_NODES: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GHeatError {
    #[error("InvalidParams: need 0 <= sigma2_low <= sigma2_high and sigma2_high > 0, got ({low}, {high})")]
    InvalidParams { low: f64, high: f64 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("CFLViolation: dt = {dt} exceeds dx^2/sigma2_high = {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("DegenerateSigmaLow: sigma_low = 0 and x = {x} > 0; the limit value is {limit}")]
    DegenerateSigmaLow { x: f64, limit: f64 },
    #[error("InvalidEpsilon: need a < b and 0 < eps < (b - a)/2, got a = {a}, b = {b}, eps = {eps}")]
    InvalidEpsilon { a: f64, b: f64, eps: f64 },
}

/// Variance interval `[σ̲², σ̄²]` of a G-normal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GNormalParams {
    pub sigma2_low: f64,
    pub sigma2_high: f64,
}

impl GNormalParams {
    pub fn new(sigma2_low: f64, sigma2_high: f64) -> Result<Self, GHeatError> {
        if !(sigma2_low >= 0.0 && sigma2_low <= sigma2_high && sigma2_high > 0.0 && sigma2_high.is_finite()) {
            return Err(GHeatError::InvalidParams {
                low: sigma2_low,
                high: sigma2_high,
            });
        }
        Ok(Self { sigma2_low, sigma2_high })
    }

    /// `[V̲, V̄]` of an ambiguity set.
    pub fn from_envelope(env: &VarianceEnvelope) -> Result<Self, GHeatError> {
        Self::new(env.lower.max(0.0), env.upper)
    }

    pub fn sigma_low(&self) -> f64 {
        self.sigma2_low.sqrt()
    }

    pub fn sigma_high(&self) -> f64 {
        self.sigma2_high.sqrt()
    }
}

/// Treatment of the two ghost nodes beyond `±L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Ghost value `2u₀ − u₁`: the second difference vanishes at the edge.
    LinearExtrapolation,
    /// Ghost value `u₀`.
    Clamp,
}

impl Boundary {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear_extrapolation" | "linear" => Some(Self::LinearExtrapolation),
            "clamp" => Some(Self::Clamp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LinearExtrapolation => "linear_extrapolation",
            Self::Clamp => "clamp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PDEConfig {
    pub halfwidth: f64,
    pub dx: f64,
    pub dt: f64,
    pub boundary: Boundary,
}

impl PDEConfig {
    /// Domain `±max(8σ̄, 1)` with the largest stable time step for `dx`.
    pub fn for_params(p: &GNormalParams, dx: f64) -> Self {
        Self {
            halfwidth: (8.0 * p.sigma_high()).max(1.0),
            dx,
            dt: dx * dx / p.sigma2_high,
            boundary: Boundary::LinearExtrapolation,
        }
    }

    /// Number of time steps; `dt` is shrunk to `1/steps` so that `t = 0` is
    /// hit exactly.
    pub fn time_steps(&self) -> usize {
        ((1.0 / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    fn validate(&self, p: &GNormalParams) -> Result<(), GHeatError> {
        if !(self.dx > 0.0 && self.dt > 0.0 && self.dx.is_finite() && self.dt.is_finite()) {
            return Err(GHeatError::InvalidConfig("dx and dt must be positive".into()));
        }
        if self.halfwidth < 6.0 * p.sigma_high() * (1.0 - 1e-12) {
            return Err(GHeatError::InvalidConfig(format!(
                "halfwidth {} is below 6*sigma_high = {}",
                self.halfwidth,
                6.0 * p.sigma_high()
            )));
        }
        let limit = self.dx * self.dx / p.sigma2_high;
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(GHeatError::CflViolation { dt: self.dt, limit });
        }
        Ok(())
    }
}

/// `G(α) = ½(σ̄²α⁺ − σ̲²α⁻)`.
pub fn g_function(alpha: f64, p: &GNormalParams) -> f64 {
    if alpha >= 0.0 {
        0.5 * p.sigma2_high * alpha
    } else {
        0.5 * p.sigma2_low * alpha
    }
}

#[inline]
fn update(um: f64, u: f64, up: f64, c_high: f64, c_low: f64) -> f64 {
    let d2 = up - 2.0 * u + um;
    if d2 >= 0.0 {
        u + c_high * d2
    } else {
        u + c_low * d2
    }
}

/// The `t = 0` slice of the G-heat solution with terminal data `φ`.
pub fn solve_g_heat(phi: &PiecewiseFunction, p: &GNormalParams, cfg: &PDEConfig) -> Result<ValueFunction, GHeatError> {
    cfg.validate(p)?;
    let axis = Axis::symmetric(cfg.halfwidth, cfg.dx);
    let steps = cfg.time_steps();
    let dt = 1.0 / steps as f64;
    let scale = dt / (cfg.dx * cfg.dx);
    let (c_high, c_low) = (0.5 * p.sigma2_high * scale, 0.5 * p.sigma2_low * scale);

    let mut u: Vec<f64> = axis.nodes().map(|x| phi.eval(x)).collect();
    let mut next = vec![0.0; u.len()];
    let last = u.len() - 1;
    for _ in 0..steps {
        let (lo_ghost, hi_ghost) = match cfg.boundary {
            Boundary::LinearExtrapolation => (2.0 * u[0] - u[1], 2.0 * u[last] - u[last - 1]),
            Boundary::Clamp => (u[0], u[last]),
        };
        next[0] = update(lo_ghost, u[0], u[1], c_high, c_low);
        next[last] = update(u[last - 1], u[last], hi_ghost, c_high, c_low);
        let interior = &mut next[1..last];
        if u.len() >= PARALLEL_NODES {
            let src = &u;
            interior
                .par_iter_mut()
                .enumerate()
                .for_each(|(k, slot)| *slot = update(src[k], src[k + 1], src[k + 2], c_high, c_low));
        } else {
            for (k, slot) in interior.iter_mut().enumerate() {
                *slot = update(u[k], u[k + 1], u[k + 2], c_high, c_low);
            }
        }
        std::mem::swap(&mut u, &mut next);
    }
    Ok(ValueFunction::new(axis, u))
}

/// `E_G[φ(ξ)] = u(0, 0)`.
pub fn g_expectation(phi: &PiecewiseFunction, p: &GNormalParams, cfg: &PDEConfig) -> Result<f64, GHeatError> {
    Ok(solve_g_heat(phi, p, cfg)?.at_node(0.0))
}

/// Standard normal distribution function, `Φ(x) = ½·erfc(−x/√2)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper distribution function `sup_P P(ξ ≤ x)` of `N(0, [σ̲², σ̄²])`.
pub fn g_normal_cdf(p: &GNormalParams, x: f64) -> Result<f64, GHeatError> {
    let (lo, hi) = (p.sigma_low(), p.sigma_high());
    if x <= 0.0 {
        return Ok(2.0 * hi / (hi + lo) * normal_cdf(x / hi));
    }
    if lo == 0.0 {
        return Err(GHeatError::DegenerateSigmaLow { x, limit: 1.0 });
    }
    Ok(1.0 - 2.0 * lo / (hi + lo) * normal_cdf(-x / lo))
}

/// Lower and upper squeeze functions for the indicator of `[a, b]`.
pub fn capacity_squeeze(a: f64, b: f64, eps: f64) -> Result<(PiecewiseFunction, PiecewiseFunction), GHeatError> {
    if !(a < b && eps > 0.0 && eps < 0.5 * (b - a)) {
        return Err(GHeatError::InvalidEpsilon { a, b, eps });
    }
    Ok((
        PiecewiseFunction::smoothstep(a + eps, b - eps, eps),
        PiecewiseFunction::smoothstep(a, b, eps),
    ))
}

/// Bracket `(E_G[g^ε], E_G[f^ε])` around the capacity of `[a, b]`, on a grid
/// with `dx = min(ε/4, 0.01)`.
pub fn interval_capacity(p: &GNormalParams, a: f64, b: f64, eps: f64) -> Result<(f64, f64), GHeatError> {
    let cfg = PDEConfig::for_params(p, (0.25 * eps).min(0.01));
    interval_capacity_with(p, a, b, eps, &cfg)
}

pub fn interval_capacity_with(
    p: &GNormalParams,
    a: f64,
    b: f64,
    eps: f64,
    cfg: &PDEConfig,
) -> Result<(f64, f64), GHeatError> {
    let (g, f) = capacity_squeeze(a, b, eps)?;
    let (lower, upper) = rayon::join(|| g_expectation(&g, p, cfg), || g_expectation(&f, p, cfg));
    Ok((lower?, upper?))
}
