#![allow(dead_code)]

use gxlab_core::{AmbiguitySet, DiscreteMeasure, PiecewiseFunction};
use proptest::prelude::*;

/// A measure with 1..=`max_atoms` atoms on a 1/8 lattice in `[lo, hi]`.
pub fn measure(max_atoms: usize, lo: f64, hi: f64) -> impl Strategy<Value = DiscreteMeasure> {
    let steps = ((hi - lo) * 8.0) as i32;
    prop::collection::vec((0..=steps, 1u32..=20), 1..=max_atoms).prop_map(move |pairs| {
        let total: u32 = pairs.iter().map(|p| p.1).sum();
        let atoms = pairs.iter().map(|p| lo + p.0 as f64 / 8.0).collect();
        let weights = pairs.iter().map(|p| p.1 as f64 / total as f64).collect();
        DiscreteMeasure::new(atoms, weights).unwrap()
    })
}

pub fn ambiguity_set(max_k: usize, max_atoms: usize, lo: f64, hi: f64) -> impl Strategy<Value = AmbiguitySet> {
    prop::collection::vec(measure(max_atoms, lo, hi), 1..=max_k).prop_map(|m| AmbiguitySet::new(m).unwrap())
}

/// Test functions with linear growth.
pub fn phi() -> impl Strategy<Value = PiecewiseFunction> {
    prop_oneof![
        Just(PiecewiseFunction::parse("abs").unwrap()),
        (-2.0..0.0f64, 0.1..2.0f64).prop_map(|(a, w)| PiecewiseFunction::tent(a, a + w + 0.5)),
        (-1.0..1.0f64).prop_map(|k| PiecewiseFunction::parse(&format!("call({k})")).unwrap()),
        (-1.0..0.0f64, 0.0..1.0f64, 0.05..0.3f64)
            .prop_map(|(a, b, e)| PiecewiseFunction::smoothstep(a - 2.0 * e, b + 2.0 * e, e)),
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(y0, y1, y2)| {
            PiecewiseFunction::parse(&format!("pwl:-1,{y0};0,{y1};1,{y2};sl=-0.5,sr=0.5")).unwrap()
        }),
    ]
}

pub fn grid_points(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..count).map(move |i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
}
