use snbranch_core::offspring::OffspringLaw;
use snbranch_core::sim::{estimate_survival, SimConfig};
use snbranch_core::solver::checks::{bound_chain_from, reconstruct_delta};
use snbranch_core::solver::{solve_u, solve_with_window, Method, SolverConfig};
use snbranch_core::window::WindowLaw;
use snbranch_core::LevyModel;

mod common;

#[test]
fn no_branching_is_exact_on_every_variant() {
    let law = OffspringLaw::new(vec![1.0]).unwrap();
    for m in common::catalog() {
        let (c, rep) = solve_u(&m, &law, &SolverConfig::with_range(20.0, 0.05)).unwrap();
        assert!(rep.converged);
        let phi = m.phi(1.0).unwrap().phi;
        for (i, u) in c.values.iter().enumerate() {
            assert!((u - (-phi * c.x(i)).exp()).abs() < 1e-9, "{} x={}", m.name(), c.x(i));
        }
    }
}

#[test]
fn subcritical_solver_matches_simulation() {
    let law = OffspringLaw::new(vec![0.75, 0.0, 0.25]).unwrap();
    for m in [common::catalog()[0], common::catalog()[2]] {
        let (c, _) = solve_u(&m, &law, &SolverConfig::with_range(30.0, 0.05)).unwrap();
        let cfg = SimConfig::new(m, law.clone(), vec![0.5, 1.0, 2.0, 3.0], 20_000, 77).unwrap();
        for l in &estimate_survival(&cfg).unwrap().levels {
            assert!((c.value(l.x) - l.u_hat).abs() <= 3.0 * l.half_width, "{} {l:?} {}", m.name(), c.value(l.x));
        }
    }
}

#[test]
fn damped_iteration_settles_monotonically() {
    let m = LevyModel::brownian(0.0, 1.0).unwrap();
    let law = OffspringLaw::new(vec![0.75, 0.0, 0.25]).unwrap();
    let cfg = SolverConfig {
        method: Method::Picard { omega: 1.0 },
        ..SolverConfig::with_range(20.0, 0.05)
    };
    let (_, rep) = solve_u(&m, &law, &cfg).unwrap();
    assert!(rep.converged && rep.iterations < 10_000);
    let tail = &rep.history[rep.history.len() / 2..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0]), "{:?}", rep.history);
}

#[test]
fn bound_chain_holds_far_out_for_critical_brownian() {
    let m = LevyModel::brownian(0.0, 1.0).unwrap();
    let law = OffspringLaw::critical_binary();
    let w = WindowLaw::new(m).unwrap();
    let (c, _) = solve_with_window(&w, &law, &SolverConfig::with_range(100.0, 0.05)).unwrap();
    let d = reconstruct_delta(&c, &w, &law).unwrap();
    let a = bound_chain_from(&c, &d, &law).unwrap();
    assert!(a < 10.0, "{a}");
}
