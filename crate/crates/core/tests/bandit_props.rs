mod common;

use common::measure;
use gxlab_core::bandit::{bandit_clt, bandit_envelope, optimal_strategy_value, BanditArms, DEFAULT_STATE_CAP};
use gxlab_core::dynamics::{dp_upper_expectation, DPConfig, KernelSet, Normalization, PathFunctional};
use gxlab_core::experiments::ExperimentConfig;
use gxlab_core::variance::envelope;
use gxlab_core::{DiscreteMeasure, PiecewiseFunction};
use proptest::prelude::*;

fn arms() -> impl Strategy<Value = BanditArms> {
    (measure(3, -2.0, 2.0), measure(3, -2.0, 2.0)).prop_map(|(l, r)| BanditArms::new(l, r))
}

fn monotone_phi() -> impl Strategy<Value = PiecewiseFunction> {
    prop_oneof![
        Just(PiecewiseFunction::identity()),
        (-2.0..2.0f64).prop_map(|k| PiecewiseFunction::parse(&format!("call({k})")).unwrap()),
        (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b, c)| {
            PiecewiseFunction::parse(&format!("pwl:-1,0;0,{a};1,{};sl={c},sr={b}", a + b)).unwrap()
        }),
    ]
}

fn terminal(f: &PiecewiseFunction) -> PathFunctional {
    PathFunctional::Terminal(f.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_matches_the_general_envelope(arms in arms()) {
        let b = bandit_envelope(&arms);
        let env = envelope(&arms.hull());
        prop_assert!((b.sigma2_low - env.lower).abs() <= 1e-8);
        if b.closed_form_applies {
            let closed = b.closed_form_sigma2_high.unwrap();
            prop_assert!((closed - env.upper).abs() <= 1e-8, "{closed} vs {}", env.upper);
        }
        prop_assert!((b.sigma2_high - env.upper).abs() <= 1e-8);
    }

    #[test]
    fn strategy_value_equals_the_uncentred_dp(arms in arms(), f in monotone_phi(), n in 1usize..=4) {
        // Atoms sit on a 1/8 lattice, so every reachable sum is a grid node.
        let strategy = optimal_strategy_value(&arms, n, &terminal(&f), DEFAULT_STATE_CAP).unwrap().value;
        let cfg = DPConfig::new(n, Normalization::Raw).with_state_step(0.125).with_kernels(KernelSet::Extremes);
        let dp = dp_upper_expectation(&arms.hull(), &terminal(&f), &cfg).unwrap();
        prop_assert!((strategy - dp).abs() <= 1e-12 * (1.0 + dp.abs()), "{strategy} vs {dp}");
    }

    #[test]
    fn improving_an_arm_never_hurts(
        arms in arms(),
        f in monotone_phi(),
        bump in prop::collection::vec(0.0..1.0f64, 3),
        n in 1usize..=4,
    ) {
        let left = arms.left();
        let better_atoms: Vec<f64> = left.atoms().iter().zip(&bump).map(|(x, d)| x + d).collect();
        let better = DiscreteMeasure::new(better_atoms, left.weights().to_vec()).unwrap();
        let improved = BanditArms::new(better, arms.right().clone());
        let before = optimal_strategy_value(&arms, n, &terminal(&f), DEFAULT_STATE_CAP).unwrap().value;
        let after = optimal_strategy_value(&improved, n, &terminal(&f), DEFAULT_STATE_CAP).unwrap().value;
        prop_assert!(after >= before - 1e-12, "{after} < {before}");
    }
}

#[test]
fn strategies_never_beat_the_hull() {
    let left = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
    let right = DiscreteMeasure::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
    let arms = BanditArms::new(left, right);
    let cfg = ExperimentConfig { state_step: 0.02, pde_dx: 0.02, ..ExperimentConfig::default() };
    for spec in ["square", "tent(-1,1)", "call(0.5)", "abs"] {
        let rows = bandit_clt(&arms, &PiecewiseFunction::parse(spec).unwrap(), &[5, 10, 20], &cfg).unwrap();
        for r in rows {
            assert!(r.strategy_le_hull && r.strategy_dp <= r.hull_dp + 1e-12, "{spec} n={}: {r:?}", r.n);
        }
    }
}
