//! Finitely supported probability measures on the real line and convex hulls
//! of finitely many of them.
//!
//! An [`AmbiguitySet`] stands for the convex hull of its generators. Every
//! functional that is linear in the law (means, expectations of a fixed
//! function) attains its extrema over the hull at a generator, which is why
//! [`AmbiguitySet::mean_bounds`] and [`AmbiguitySet::upper_expectation`] only
//! scan the generators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::PiecewiseFunction;
use crate::sum::{pairwise_sum, pairwise_sum_by};

/// Atoms closer than this are merged during canonicalisation.
pub const ATOM_MERGE_TOLERANCE: f64 = 1e-12;
/// Accepted deviation of the input weight total from one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;
/// Accepted deviation of a simplex weight total from one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("NonFiniteAtom: atom {index} is {value}")]
    NonFiniteAtom { index: usize, value: f64 },
    #[error("NegativeWeight: weight {index} is {value}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("ZeroTotalWeight: weights sum to zero")]
    ZeroTotalWeight,
    #[error("WeightsNotNormalized: weights sum to {total}")]
    WeightsNotNormalized { total: f64 },
    #[error("LengthMismatch: {atoms} atoms but {weights} weights")]
    LengthMismatch { atoms: usize, weights: usize },
    #[error("EmptyMeasure: a measure needs at least one atom")]
    Empty,
    #[error("EmptyAmbiguitySet: at least one generator is required")]
    NoExtremes,
    #[error("DimensionMismatch: expected {expected} mixing weights, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("InvalidSimplexWeight: {0}")]
    InvalidSimplexWeight(String),
    #[error("NonFiniteValue: test function is not finite at atom {atom}")]
    NonFiniteValue { atom: f64 },
    #[error("InvalidJson: {0}")]
    Json(String),
}

/// A finitely supported probability measure in canonical form: atoms
/// strictly increasing, weights positive and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validates and canonicalises `atoms`/`weights`.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if atoms.len() != weights.len() {
            return Err(MeasureError::LengthMismatch {
                atoms: atoms.len(),
                weights: weights.len(),
            });
        }
        if atoms.is_empty() {
            return Err(MeasureError::Empty);
        }
        let total = pairwise_sum(&weights);
        if total.is_finite() && total > 0.0 && (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(MeasureError::WeightsNotNormalized { total });
        }
        canonicalize(&atoms, &weights)
    }

    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Result<Self, MeasureError> {
        Self::new(vec![x], vec![1.0])
    }

    /// Uniform law on the given points.
    pub fn uniform(points: &[f64]) -> Result<Self, MeasureError> {
        let w = 1.0 / points.len().max(1) as f64;
        Self::new(points.to_vec(), vec![w; points.len()])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `Σ wᵢ aᵢᵏ`, pairwise summed.
    pub fn moment(&self, k: u32) -> f64 {
        pairwise_sum_by(self.len(), |i| self.weights[i] * self.atoms[i].powi(k as i32))
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// `E[φ(X)]`.
    pub fn expect<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        pairwise_sum_by(self.len(), |i| self.weights[i] * phi(self.atoms[i]))
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max_atom(&self) -> f64 {
        self.atoms[self.atoms.len() - 1]
    }

    /// Largest atom magnitude.
    pub fn max_abs_atom(&self) -> f64 {
        self.min_atom().abs().max(self.max_atom().abs())
    }

    /// Inverse-CDF draw for a uniform variate `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return *a;
            }
        }
        self.max_atom()
    }

    /// Weighted sum of measures with already-valid mixing weights.
    pub(crate) fn mixture<'a, I>(parts: I) -> Result<Self, MeasureError>
    where
        I: IntoIterator<Item = (f64, &'a DiscreteMeasure)>,
    {
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (lambda, m) in parts {
            if lambda == 0.0 {
                continue;
            }
            atoms.extend_from_slice(&m.atoms);
            weights.extend(m.weights.iter().map(|w| lambda * w));
        }
        canonicalize(&atoms, &weights)
    }
}

/// Sorts atoms, merges those within [`ATOM_MERGE_TOLERANCE`], drops zero
/// weights and renormalises.
pub fn canonicalize(atoms: &[f64], weights: &[f64]) -> Result<DiscreteMeasure, MeasureError> {
    if atoms.len() != weights.len() {
        return Err(MeasureError::LengthMismatch {
            atoms: atoms.len(),
            weights: weights.len(),
        });
    }
    for (index, &value) in atoms.iter().enumerate() {
        if !value.is_finite() {
            return Err(MeasureError::NonFiniteAtom { index, value });
        }
    }
    for (index, &value) in weights.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(MeasureError::NegativeWeight { index, value });
        }
    }
    let mut order: Vec<usize> = (0..atoms.len()).filter(|&i| weights[i] > 0.0).collect();
    if order.is_empty() {
        return Err(MeasureError::ZeroTotalWeight);
    }
    order.sort_by(|&i, &j| atoms[i].total_cmp(&atoms[j]).then(i.cmp(&j)));

    let mut out_atoms: Vec<f64> = Vec::with_capacity(order.len());
    let mut groups: Vec<Vec<f64>> = Vec::with_capacity(order.len());
    for i in order {
        match out_atoms.last() {
            Some(&last) if atoms[i] - last <= ATOM_MERGE_TOLERANCE => {
                groups.last_mut().unwrap().push(weights[i]);
            }
            _ => {
                out_atoms.push(atoms[i]);
                groups.push(vec![weights[i]]);
            }
        }
    }
    let merged: Vec<f64> = groups.iter().map(|g| pairwise_sum(g)).collect();
    let total = pairwise_sum(&merged);
    if !(total > 0.0) {
        return Err(MeasureError::ZeroTotalWeight);
    }
    // Weights already summing to one up to rounding are kept as given, so
    // canonicalising twice is the identity.
    let out_weights = if (total - 1.0).abs() <= 1e-14 {
        merged
    } else {
        merged.into_iter().map(|w| w / total).collect()
    };
    Ok(DiscreteMeasure {
        atoms: out_atoms,
        weights: out_weights,
    })
}

/// Mixing weights over the generators of an [`AmbiguitySet`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexWeight(Vec<f64>);

impl SimplexWeight {
    pub fn new(weights: Vec<f64>) -> Result<Self, MeasureError> {
        if weights.is_empty() {
            return Err(MeasureError::InvalidSimplexWeight("empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(MeasureError::InvalidSimplexWeight(format!("entry {w} is negative or not finite")));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(MeasureError::InvalidSimplexWeight(format!("entries sum to {total}")));
        }
        Ok(Self(weights))
    }

    /// The unit vector selecting generator `index` out of `k`.
    pub fn vertex(k: usize, index: usize) -> Self {
        let mut w = vec![0.0; k];
        w[index] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }
}

/// All points of the simplex with `k` coordinates that are multiples of
/// `1/m`, where `m = round(1/resolution)`, in lexicographic order of the
/// integer compositions (first coordinate largest first).
pub fn simplex_grid(k: usize, resolution: f64) -> Vec<SimplexWeight> {
    let m = (1.0 / resolution).round().max(1.0) as usize;
    let mut out = Vec::new();
    let mut counts = vec![0usize; k];
    fn rec(pos: usize, remaining: usize, m: usize, counts: &mut Vec<usize>, out: &mut Vec<SimplexWeight>) {
        let k = counts.len();
        if pos == k - 1 {
            counts[pos] = remaining;
            out.push(SimplexWeight(counts.iter().map(|&c| c as f64 / m as f64).collect()));
            return;
        }
        for c in (0..=remaining).rev() {
            counts[pos] = c;
            rec(pos + 1, remaining - c, m, counts, out);
        }
    }
    if k > 0 {
        rec(0, m, m, &mut counts, &mut out);
    }
    out
}

/// Lower and upper mean of an ambiguity set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanBounds {
    pub lower: f64,
    pub upper: f64,
}

impl MeanBounds {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Distance from `x` to the interval.
    pub fn distance(&self, x: f64) -> f64 {
        (self.lower - x).max(x - self.upper).max(0.0)
    }
}

/// Convex hull of finitely many [`DiscreteMeasure`]s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmbiguitySet {
    extremes: Vec<DiscreteMeasure>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSet {
    extremes: Vec<RawMeasure>,
}

impl AmbiguitySet {
    pub fn new(extremes: Vec<DiscreteMeasure>) -> Result<Self, MeasureError> {
        if extremes.is_empty() {
            return Err(MeasureError::NoExtremes);
        }
        Ok(Self { extremes })
    }

    pub fn singleton(m: DiscreteMeasure) -> Self {
        Self { extremes: vec![m] }
    }

    /// Parses `{"extremes":[{"atoms":[...],"weights":[...]}, ...]}`.
    ///
    /// Syntax errors carry the JSON line and column; invariant violations
    /// name the offending field, e.g. `extremes[1].weights[0]`.
    pub fn from_json(text: &str) -> Result<Self, MeasureError> {
        let raw: RawSet = serde_json::from_str(text)
            .map_err(|e| MeasureError::Json(format!("line {} column {}: {}", e.line(), e.column(), e)))?;
        let mut extremes = Vec::with_capacity(raw.extremes.len());
        for (j, m) in raw.extremes.into_iter().enumerate() {
            let measure = DiscreteMeasure::new(m.atoms, m.weights).map_err(|e| {
                let field = match &e {
                    MeasureError::NonFiniteAtom { index, .. } => format!("extremes[{j}].atoms[{index}]"),
                    MeasureError::NegativeWeight { index, .. } => format!("extremes[{j}].weights[{index}]"),
                    _ => format!("extremes[{j}]"),
                };
                MeasureError::Json(format!("{field}: {e}"))
            })?;
            extremes.push(measure);
        }
        if extremes.is_empty() {
            return Err(MeasureError::Json("extremes: at least one generator is required".into()));
        }
        Ok(Self { extremes })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measures serialise")
    }

    pub fn extremes(&self) -> &[DiscreteMeasure] {
        &self.extremes
    }

    pub fn len(&self) -> usize {
        self.extremes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extremes.is_empty()
    }

    /// `Σⱼ λⱼ Pⱼ`, canonicalised.
    pub fn mix(&self, lambda: &SimplexWeight) -> Result<DiscreteMeasure, MeasureError> {
        if lambda.len() != self.len() {
            return Err(MeasureError::DimensionMismatch {
                expected: self.len(),
                got: lambda.len(),
            });
        }
        DiscreteMeasure::mixture(lambda.as_slice().iter().copied().zip(&self.extremes))
    }

    /// Mean of `mix(λ)` without building the mixture.
    pub fn mixture_mean(&self, lambda: &SimplexWeight) -> f64 {
        pairwise_sum_by(self.len(), |j| lambda.as_slice()[j] * self.extremes[j].mean())
    }

    pub fn mean_bounds(&self) -> MeanBounds {
        let means: Vec<f64> = self.extremes.iter().map(DiscreteMeasure::mean).collect();
        MeanBounds {
            lower: means.iter().copied().fold(f64::INFINITY, f64::min),
            upper: means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `sup_{P ∈ hull} E_P[φ(X)]`.
    pub fn upper_expectation(&self, phi: &PiecewiseFunction) -> Result<f64, MeasureError> {
        let mut best = f64::NEG_INFINITY;
        for m in &self.extremes {
            for &a in m.atoms() {
                if !phi.eval(a).is_finite() {
                    return Err(MeasureError::NonFiniteValue { atom: a });
                }
            }
            best = best.max(m.expect(|x| phi.eval(x)));
        }
        Ok(best)
    }

    /// `inf_{P ∈ hull} E_P[φ(X)]`.
    pub fn lower_expectation(&self, phi: &PiecewiseFunction) -> Result<f64, MeasureError> {
        Ok(-self.upper_expectation(&phi.neg())?)
    }

    pub fn max_abs_atom(&self) -> f64 {
        self.extremes.iter().map(DiscreteMeasure::max_abs_atom).fold(0.0, f64::max)
    }

    pub fn min_atom(&self) -> f64 {
        self.extremes.iter().map(DiscreteMeasure::min_atom).fold(f64::INFINITY, f64::min)
    }

    pub fn max_atom(&self) -> f64 {
        self.extremes.iter().map(DiscreteMeasure::max_atom).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `x ↦ scale·x + shift` to every atom of every generator.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self, MeasureError> {
        let extremes = self
            .extremes
            .iter()
            .map(|m| {
                let atoms: Vec<f64> = m.atoms.iter().map(|a| scale * a + shift).collect();
                canonicalize(&atoms, &m.weights)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(extremes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(atoms: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(atoms.to_vec(), weights.to_vec()).unwrap()
    }

    #[test]
    fn canonicalize_sorts() {
        let c = m(&[1.0, 0.0], &[0.5, 0.5]);
        assert_eq!(c.atoms(), &[0.0, 1.0]);
        assert_eq!(c.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn canonicalize_merges_duplicates() {
        let c = m(&[0.0, 0.0, 1.0], &[0.25, 0.25, 0.5]);
        assert_eq!(c.atoms(), &[0.0, 1.0]);
        assert_eq!(c.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn canonicalize_identity_and_zero_weights() {
        let c = m(&[2.0], &[1.0]);
        assert_eq!(c.atoms(), &[2.0]);
        let d = m(&[0.0, 1.0, 3.0], &[0.5, 0.0, 0.5]);
        assert_eq!(d.atoms(), &[0.0, 3.0]);
    }

    #[test]
    fn canonicalize_rejects_bad_input() {
        assert!(matches!(
            canonicalize(&[f64::NAN], &[1.0]),
            Err(MeasureError::NonFiniteAtom { index: 0, .. })
        ));
        assert!(matches!(
            canonicalize(&[0.0, 1.0], &[1.5, -0.5]),
            Err(MeasureError::NegativeWeight { index: 1, .. })
        ));
        assert_eq!(canonicalize(&[0.0], &[0.0]), Err(MeasureError::ZeroTotalWeight));
        assert!(matches!(
            DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.6]),
            Err(MeasureError::WeightsNotNormalized { .. })
        ));
    }

    #[test]
    fn moments() {
        assert_eq!(m(&[0.0, 1.0], &[0.5, 0.5]).moment(1), 0.5);
        assert_eq!(m(&[-1.0, 1.0], &[0.5, 0.5]).moment(2), 1.0);
        assert_eq!(m(&[0.0, 2.0], &[0.5, 0.5]).moment(2), 2.0);
    }

    #[test]
    fn mix_examples() {
        let a = AmbiguitySet::new(vec![DiscreteMeasure::dirac(0.0).unwrap(), DiscreteMeasure::dirac(1.0).unwrap()])
            .unwrap();
        let v = a.mix(&SimplexWeight::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(v, DiscreteMeasure::dirac(0.0).unwrap());
        let h = a.mix(&SimplexWeight::new(vec![0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(h, m(&[0.0, 1.0], &[0.5, 0.5]));

        let u = AmbiguitySet::new(vec![
            DiscreteMeasure::uniform(&[-1.0, 1.0]).unwrap(),
            DiscreteMeasure::uniform(&[-2.0, 2.0]).unwrap(),
        ])
        .unwrap();
        let q = u.mix(&SimplexWeight::new(vec![0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(q.atoms(), &[-2.0, -1.0, 1.0, 2.0]);
        assert_eq!(q.weights(), &[0.25; 4]);

        assert!(matches!(
            u.mix(&SimplexWeight::new(vec![1.0]).unwrap()),
            Err(MeasureError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn mean_bounds_examples() {
        let pm = AmbiguitySet::new(vec![DiscreteMeasure::dirac(-1.0).unwrap(), DiscreteMeasure::dirac(1.0).unwrap()])
            .unwrap();
        assert_eq!(pm.mean_bounds(), MeanBounds { lower: -1.0, upper: 1.0 });
        let bin = AmbiguitySet::new(vec![DiscreteMeasure::dirac(0.0).unwrap(), DiscreteMeasure::dirac(1.0).unwrap()])
            .unwrap();
        assert_eq!(bin.mean_bounds(), MeanBounds { lower: 0.0, upper: 1.0 });
        let u = AmbiguitySet::new(vec![
            DiscreteMeasure::uniform(&[-1.0, 1.0]).unwrap(),
            DiscreteMeasure::uniform(&[-2.0, 2.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(u.mean_bounds(), MeanBounds { lower: 0.0, upper: 0.0 });
    }

    #[test]
    fn upper_expectation_examples() {
        let d0 = AmbiguitySet::singleton(DiscreteMeasure::dirac(0.0).unwrap());
        assert_eq!(d0.upper_expectation(&PiecewiseFunction::identity()).unwrap(), 0.0);
        let u = AmbiguitySet::new(vec![
            DiscreteMeasure::uniform(&[-1.0, 1.0]).unwrap(),
            DiscreteMeasure::uniform(&[-2.0, 2.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(u.upper_expectation(&PiecewiseFunction::Square).unwrap(), 4.0);
        let pm = AmbiguitySet::new(vec![DiscreteMeasure::dirac(-1.0).unwrap(), DiscreteMeasure::dirac(1.0).unwrap()])
            .unwrap();
        assert_eq!(pm.upper_expectation(&PiecewiseFunction::Abs).unwrap(), 1.0);
    }

    #[test]
    fn json_round_trip_and_field_errors() {
        let text = r#"{"extremes":[{"atoms":[0],"weights":[1]},{"atoms":[1],"weights":[1]}]}"#;
        let a = AmbiguitySet::from_json(text).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(AmbiguitySet::from_json(&a.to_json()).unwrap(), a);

        let bad = r#"{"extremes":[{"atoms":[0],"weights":[1]},{"atoms":[0,1],"weights":[1.5,-0.5]}]}"#;
        let err = AmbiguitySet::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("extremes[1].weights[1]"), "{err}");

        let syntax = "{\n\"extremes\": [\n{\"atoms\": [0,], \"weights\": [1]}]}";
        let err = AmbiguitySet::from_json(syntax).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn simplex_grid_sizes() {
        assert_eq!(simplex_grid(2, 1.0 / 64.0).len(), 65);
        assert_eq!(simplex_grid(3, 0.1).len(), 66);
        assert_eq!(simplex_grid(1, 0.5).len(), 1);
        for w in simplex_grid(3, 0.1) {
            assert!(SimplexWeight::new(w.as_slice().to_vec()).is_ok());
        }
    }

    #[test]
    fn quantile_walks_cdf() {
        let q = m(&[-1.0, 0.0, 2.0], &[0.25, 0.5, 0.25]);
        assert_eq!(q.quantile(0.0), -1.0);
        assert_eq!(q.quantile(0.3), 0.0);
        assert_eq!(q.quantile(0.9), 2.0);
    }
}
