//! Upper and lower variance envelopes of an ambiguity set.
//!
//! The upper variance is the min–max value
//! `min_{μ̲ ≤ μ ≤ μ̄} max_j E_{P_j}[(X − μ)²]`. Each `E_{P_j}[(X − μ)²]` equals
//! `V_j + (m_j − μ)²`, so the inner maximum is an upper envelope of unit
//! parabolas. Its minimum over the interval is found exactly by evaluating
//! every candidate point: parabola vertices, pairwise crossings and the two
//! endpoints.
//!
//! The same value is the maximum classical variance over the hull. A hull
//! point attaining it is kept as a witness, and [`VarianceEnvelope::achieve`]
//! walks the segment from the lower witness to the upper witness to hit any
//! prescribed variance in between.

use serde::Serialize;
use thiserror::Error;

use crate::measures::{AmbiguitySet, DiscreteMeasure, MeanBounds, MeasureError, SimplexWeight};
use crate::sum::pairwise_sum_by;

/// Slack allowed when a requested variance sits just outside the envelope.
pub const ENVELOPE_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarianceError {
    #[error("SigmaOutOfEnvelope: {sigma2} is outside [{lower}, {upper}]")]
    SigmaOutOfEnvelope { sigma2: f64, lower: f64, upper: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// `E[(X − E X)²]`, computed from centered deviations.
pub fn variance_of(measure: &DiscreteMeasure) -> f64 {
    let m = measure.mean();
    let (a, w) = (measure.atoms(), measure.weights());
    pairwise_sum_by(a.len(), |i| {
        let d = a[i] - m;
        w[i] * d * d
    })
}

/// Upper and lower variance of an ambiguity set with their witnesses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceEnvelope {
    pub lower: f64,
    pub upper: f64,
    /// The μ attaining the outer minimum of the upper variance.
    pub argmin_mu_upper: f64,
    /// Hull point whose variance equals `upper`.
    pub witness_upper: SimplexWeight,
    /// Generator whose variance equals `lower`.
    pub witness_lower: usize,
    pub means: MeanBounds,
}

/// Per-generator summary used by the closed forms.
#[derive(Debug, Clone, Copy)]
struct Moments {
    mean: f64,
    var: f64,
    second: f64,
}

fn moments(a: &AmbiguitySet) -> Vec<Moments> {
    a.extremes()
        .iter()
        .map(|m| {
            let mean = m.mean();
            let var = variance_of(m);
            Moments {
                mean,
                var,
                second: var + mean * mean,
            }
        })
        .collect()
}

/// Variance of `mix(λ)` from generator moments.
fn mixture_variance(ms: &[Moments], lambda: &[f64]) -> f64 {
    let mean = pairwise_sum_by(ms.len(), |j| lambda[j] * ms[j].mean);
    let second = pairwise_sum_by(ms.len(), |j| lambda[j] * ms[j].second);
    second - mean * mean
}

/// `g(μ) = max_j V_j + (m_j − μ)²`.
fn envelope_at(ms: &[Moments], mu: f64) -> f64 {
    ms.iter()
        .map(|m| m.var + (m.mean - mu) * (m.mean - mu))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Minimises `g` over `[lo, hi]` by candidate enumeration.
fn minimise_envelope(ms: &[Moments], lo: f64, hi: f64) -> (f64, f64) {
    let mut candidates = vec![lo, hi];
    for (i, mi) in ms.iter().enumerate() {
        candidates.push(mi.mean);
        for mj in &ms[i + 1..] {
            let d = mi.mean - mj.mean;
            if d != 0.0 {
                // V_i + (m_i − μ)² = V_j + (m_j − μ)² is linear in μ.
                let mu = (mi.var - mj.var + mi.mean * mi.mean - mj.mean * mj.mean) / (2.0 * d);
                candidates.push(mu);
            }
        }
    }
    let mut best = (f64::INFINITY, lo);
    for mu in candidates {
        if !(lo <= mu && mu <= hi) {
            continue;
        }
        let g = envelope_at(ms, mu);
        if g < best.0 {
            best = (g, mu);
        }
    }
    best
}

/// Maximiser of the variance on the segment `t·e_i + (1 − t)·e_j` (closed
/// form of a concave quadratic in `t`).
fn best_on_edge(ms: &[Moments], i: usize, j: usize) -> f64 {
    let d = ms[i].mean - ms[j].mean;
    let ds = ms[i].second - ms[j].second;
    if d == 0.0 {
        return if ds >= 0.0 { 1.0 } else { 0.0 };
    }
    // d/dt [t s_i + (1−t) s_j − (t m_i + (1−t) m_j)²] = 0
    let t = (ds / (2.0 * d) - ms[j].mean) / d;
    t.clamp(0.0, 1.0)
}

/// Hull point of maximal variance.
fn maximise_hull_variance(ms: &[Moments]) -> Vec<f64> {
    let k = ms.len();
    if k == 1 {
        return vec![1.0];
    }
    // Best vertex or edge first.
    let mut lambda = vec![0.0; k];
    let mut best = f64::NEG_INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            let t = best_on_edge(ms, i, j);
            let mut cand = vec![0.0; k];
            cand[i] = t;
            cand[j] = 1.0 - t;
            let v = mixture_variance(ms, &cand);
            if v > best {
                best = v;
                lambda = cand;
            }
        }
    }
    if k == 2 {
        return lambda;
    }
    // Pairwise coordinate ascent: move mass between two generators along the
    // exact maximiser of the one-dimensional concave restriction.
    for _sweep in 0..10_000 {
        let before = mixture_variance(ms, &lambda);
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let mass = lambda[i] + lambda[j];
                if mass <= 0.0 {
                    continue;
                }
                let mean_rest: f64 = (0..k).filter(|&l| l != i && l != j).map(|l| lambda[l] * ms[l].mean).sum();
                // mean(δ) = mean_rest + (λ_i+δ) m_i + (λ_j−δ) m_j
                let d = ms[i].mean - ms[j].mean;
                let ds = ms[i].second - ms[j].second;
                let base = mean_rest + lambda[i] * ms[i].mean + lambda[j] * ms[j].mean;
                let delta = if d == 0.0 {
                    if ds > 0.0 {
                        lambda[j]
                    } else if ds < 0.0 {
                        -lambda[i]
                    } else {
                        0.0
                    }
                } else {
                    (ds / (2.0 * d) - base) / d
                };
                let delta = delta.clamp(-lambda[i], lambda[j]);
                let mut cand = lambda.clone();
                cand[i] += delta;
                cand[j] -= delta;
                if mixture_variance(ms, &cand) > mixture_variance(ms, &lambda) {
                    lambda = cand;
                }
            }
        }
        let after = mixture_variance(ms, &lambda);
        if after - before <= 1e-16 * (1.0 + after.abs()) {
            break;
        }
    }
    let total: f64 = lambda.iter().sum();
    lambda.iter().map(|l| (l / total).max(0.0)).collect()
}

/// Upper variance with its argmin μ and a hull witness.
pub fn upper_variance(a: &AmbiguitySet) -> (f64, f64, SimplexWeight) {
    let ms = moments(a);
    let bounds = a.mean_bounds();
    let (value, mu) = minimise_envelope(&ms, bounds.lower, bounds.upper);
    let witness = SimplexWeight::from_raw(maximise_hull_variance(&ms));
    (value, mu, witness)
}

/// Lower variance and the index of the generator attaining it (first on
/// ties).
pub fn lower_variance(a: &AmbiguitySet) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (j, m) in a.extremes().iter().enumerate() {
        let v = variance_of(m);
        if v < best.0 {
            best = (v, j);
        }
    }
    best
}

/// Both envelopes plus the mean bounds.
pub fn envelope(a: &AmbiguitySet) -> VarianceEnvelope {
    let (upper, argmin_mu_upper, witness_upper) = upper_variance(a);
    let (lower, witness_lower) = lower_variance(a);
    VarianceEnvelope {
        lower,
        upper,
        argmin_mu_upper,
        witness_upper,
        witness_lower,
        means: a.mean_bounds(),
    }
}

/// A hull member with prescribed variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AchievedVariance {
    /// Weight on the lower witness; `1 − c` sits on the upper witness.
    pub c: f64,
    /// Mixing weights of the result over the generators.
    pub lambda: SimplexWeight,
    pub measure: DiscreteMeasure,
}

impl VarianceEnvelope {
    /// Finds `c ∈ [0, 1]` with `Var(c·P̲ + (1−c)·P̄) = σ²`.
    ///
    /// Along the segment the variance is
    /// `h(c) = c·V̲ + (1−c)·V̄ + c(1−c)·(E_P̄ X − E_P̲ X)²`, a concave quadratic
    /// with `h(0) ≥ σ² ≥ h(1)`. The smaller root in `[0, 1]` is returned.
    pub fn achieve(&self, a: &AmbiguitySet, sigma2: f64) -> Result<AchievedVariance, VarianceError> {
        if !(sigma2 >= self.lower - ENVELOPE_SLACK && sigma2 <= self.upper + ENVELOPE_SLACK) {
            return Err(VarianceError::SigmaOutOfEnvelope {
                sigma2,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let upper_measure = a.mix(&self.witness_upper)?;
        let lower_measure = &a.extremes()[self.witness_lower];
        let v_hi = variance_of(&upper_measure);
        let v_lo = variance_of(lower_measure);
        let d = upper_measure.mean() - lower_measure.mean();
        let d2 = d * d;
        let target = sigma2.clamp(v_lo.min(v_hi), v_hi);
        let h = |c: f64| c * v_lo + (1.0 - c) * v_hi + c * (1.0 - c) * d2;

        let c = if d2 == 0.0 {
            if v_hi - v_lo > 0.0 {
                ((v_hi - target) / (v_hi - v_lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        } else {
            smaller_root_in_unit(-d2, v_lo - v_hi + d2, v_hi - target)
        };
        // One Newton polish on h(c) − σ² keeps the residual at rounding level.
        let slope = v_lo - v_hi + d2 * (1.0 - 2.0 * c);
        let c = if slope != 0.0 {
            let next = c - (h(c) - target) / slope;
            if (0.0..=1.0).contains(&next) && (h(next) - target).abs() < (h(c) - target).abs() {
                next
            } else {
                c
            }
        } else {
            c
        };

        let k = a.len();
        let mut lambda: Vec<f64> = self.witness_upper.as_slice().iter().map(|w| (1.0 - c) * w).collect();
        lambda[self.witness_lower] += c;
        debug_assert_eq!(lambda.len(), k);
        let lambda = SimplexWeight::from_raw(lambda);
        let measure = DiscreteMeasure::mixture([(c, lower_measure), (1.0 - c, &upper_measure)])?;
        Ok(AchievedVariance { c, lambda, measure })
    }
}

/// Smaller root in `[0, 1]` of `a c² + b c + c0` with `a < 0`.
fn smaller_root_in_unit(a: f64, b: f64, c0: f64) -> f64 {
    let disc = (b * b - 4.0 * a * c0).max(0.0);
    let sq = disc.sqrt();
    // Numerically stable pair of roots.
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(q / a);
        roots.push(c0 / q);
    } else {
        roots.push(0.0);
    }
    let tol = 1e-12;
    roots
        .into_iter()
        .filter(|r| *r >= -tol && *r <= 1.0 + tol)
        .map(|r| r.clamp(0.0, 1.0))
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |x| x.min(r))))
        .unwrap_or(if c0 <= 0.0 { 0.0 } else { 1.0 })
}

/// Convenience wrapper: envelope then [`VarianceEnvelope::achieve`].
pub fn achieve_variance(a: &AmbiguitySet, sigma2: f64) -> Result<AchievedVariance, VarianceError> {
    envelope(a).achieve(a, sigma2)
}
