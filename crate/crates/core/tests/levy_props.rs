use proptest::prelude::*;
use snbranch_core::{DriftRegime, LevyModel};

mod common;

#[test]
fn roots_invert_psi_on_catalog() {
    for m in common::catalog().into_iter().chain([
        LevyModel::brownian(-0.5, 1.0).unwrap(),
        LevyModel::brownian(0.0, 1.0).unwrap(),
    ]) {
        for q in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let p = m.phi(q).unwrap();
            assert!((m.psi(p.phi) - q).abs() <= 1e-10, "{} q={q}", m.name());
            assert!(m.psi_prime(p.phi) >= 0.0);
        }
    }
}

#[test]
fn phi_is_nondecreasing() {
    for m in common::catalog() {
        let phis: Vec<f64> = (0..50).map(|i| m.phi(0.1 * i as f64).unwrap().phi).collect();
        assert!(phis.windows(2).all(|w| w[1] >= w[0]), "{}", m.name());
    }
}

#[test]
fn regimes_match_hand_classification() {
    let cases = [
        (LevyModel::brownian(0.2, 1.0).unwrap(), DriftRegime::DriftUp),
        (LevyModel::brownian(0.0, 1.0).unwrap(), DriftRegime::Oscillating),
        (LevyModel::brownian(-0.5, 1.0).unwrap(), DriftRegime::DriftDown),
        (LevyModel::stable(1.5, 1.0).unwrap(), DriftRegime::Oscillating),
        (LevyModel::brownian_exp_jumps(1.0, 1.0, 1.0, 2.0).unwrap(), DriftRegime::DriftUp),
        (LevyModel::brownian_exp_jumps(0.5, 1.0, 1.0, 2.0).unwrap(), DriftRegime::Oscillating),
        (LevyModel::brownian_exp_jumps(0.2, 1.0, 1.0, 2.0).unwrap(), DriftRegime::DriftDown),
        (LevyModel::stable_with_drift(0.5, 1.5, 1.0).unwrap(), DriftRegime::DriftUp),
        (LevyModel::stable_with_drift(-0.5, 1.5, 1.0).unwrap(), DriftRegime::DriftDown),
    ];
    for (m, r) in cases {
        assert_eq!(m.regime(), r, "{m:?}");
    }
}

proptest! {
    #[test]
    fn psi_is_convex(idx in 0usize..4, a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let m = common::catalog()[idx];
        let mid = m.psi(0.5 * (a + b));
        let chord = 0.5 * (m.psi(a) + m.psi(b));
        prop_assert!(mid <= chord + 1e-12 * chord.abs().max(1.0));
    }

    #[test]
    fn phi_solves_for_random_q(a in -1.0f64..1.0, eta in 0.2f64..2.0, q in 0.0f64..5.0) {
        let m = LevyModel::brownian(a, eta).unwrap();
        let p = m.phi(q).unwrap();
        prop_assert!((m.psi(p.phi) - q).abs() <= 1e-10 * q.max(1.0));
        prop_assert!(p.phi >= 0.0);
    }
}
