mod common;

use common::ambiguity_set;
use gxlab_core::measures::simplex_grid;
use gxlab_core::variance::{achieve_variance, envelope, variance_of};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_mixture_variance_lies_in_the_envelope(a in ambiguity_set(3, 5, -5.0, 5.0)) {
        let env = envelope(&a);
        let tol = 1e-10 * (1.0 + env.upper);
        for lambda in simplex_grid(a.len(), 1e-2) {
            let v = variance_of(&a.mix(&lambda).unwrap());
            prop_assert!(env.lower - tol <= v && v <= env.upper + tol, "{} not in [{}, {}]", v, env.lower, env.upper);
        }
    }

    #[test]
    fn upper_witness_attains_the_upper_variance(a in ambiguity_set(3, 5, -5.0, 5.0)) {
        let env = envelope(&a);
        let v = variance_of(&a.mix(&env.witness_upper).unwrap());
        prop_assert!((v - env.upper).abs() <= 1e-9 * (1.0 + env.upper), "{v} vs {}", env.upper);
        let lower = variance_of(&a.extremes()[env.witness_lower]);
        prop_assert_eq!(lower, env.lower);
    }

    #[test]
    fn upper_variance_is_the_min_max_over_means(a in ambiguity_set(3, 5, -5.0, 5.0)) {
        // μ ↦ max_j E_j[(X − μ)²] is convex, so golden-section search finds
        // its minimum over the mean interval independently.
        let env = envelope(&a);
        let b = a.mean_bounds();
        let second: Vec<(f64, f64)> = a.extremes().iter().map(|m| (m.mean(), variance_of(m))).collect();
        let worst = |mu: f64| second.iter().map(|(m, v)| v + (m - mu) * (m - mu)).fold(f64::MIN, f64::max);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (b.lower, b.upper);
        for _ in 0..200 {
            let x1 = hi - ratio * (hi - lo);
            let x2 = lo + ratio * (hi - lo);
            if worst(x1) <= worst(x2) { hi = x2 } else { lo = x1 }
        }
        let searched = worst(0.5 * (lo + hi));
        prop_assert!((searched - env.upper).abs() <= 1e-9 * (1.0 + env.upper), "{searched} vs {}", env.upper);
        prop_assert!((worst(env.argmin_mu_upper) - env.upper).abs() <= 1e-9 * (1.0 + env.upper));
    }

    #[test]
    fn achieve_variance_hits_targets(a in ambiguity_set(3, 5, -5.0, 5.0)) {
        let env = envelope(&a);
        for i in 0..10 {
            let target = env.lower + (env.upper - env.lower) * i as f64 / 9.0;
            let got = achieve_variance(&a, target).unwrap();
            prop_assert!((0.0..=1.0).contains(&got.c));
            prop_assert!((variance_of(&got.measure) - target).abs() <= 1e-10 * (1.0 + target));
            let mixed = a.mix(&got.lambda).unwrap();
            prop_assert_eq!(mixed.atoms(), got.measure.atoms());
            for (x, y) in mixed.weights().iter().zip(got.measure.weights()) {
                prop_assert!((x - y).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn scaling_and_shifting(a in ambiguity_set(3, 5, -5.0, 5.0), s in 0.1..4.0f64, t in -10.0..10.0f64) {
        let env = envelope(&a);
        let scaled = envelope(&a.affine(s, 0.0).unwrap());
        let shifted = envelope(&a.affine(1.0, t).unwrap());
        let tol = 1e-10 * (1.0 + env.upper * s * s);
        prop_assert!((scaled.upper - s * s * env.upper).abs() <= tol);
        prop_assert!((scaled.lower - s * s * env.lower).abs() <= tol);
        prop_assert!((shifted.upper - env.upper).abs() <= 1e-9 * (1.0 + env.upper));
        prop_assert!((shifted.lower - env.lower).abs() <= 1e-9 * (1.0 + env.lower));
    }
}
