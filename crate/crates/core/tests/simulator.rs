use snbranch_core::offspring::OffspringLaw;
use snbranch_core::sim::{estimate_survival, SimConfig};
use snbranch_core::LevyModel;

fn bm() -> LevyModel {
    LevyModel::brownian(0.0, 1.0).unwrap()
}

fn subcritical() -> OffspringLaw {
    OffspringLaw::new(vec![0.75, 0.0, 0.25]).unwrap()
}

#[test]
fn subcritical_replicates_terminate_without_barrier() {
    let mut cfg = SimConfig::new(bm(), subcritical(), vec![1.0, 2.0, 3.0, 4.0, 5.0], 10_000, 21).unwrap();
    cfg.kill_barrier = None;
    let est = estimate_survival(&cfg).unwrap();
    for l in &est.levels {
        assert!(l.truncated_frac() < 1e-3, "{l:?}");
        assert_eq!(l.killed, 0);
    }
    assert!(est.levels.windows(2).all(|w| w[1].u_hat <= w[0].u_hat));
}

#[test]
fn doubling_barrier_is_within_half_width() {
    for (model, law) in [
        (bm(), subcritical()),
        (LevyModel::brownian(0.2, 1.0).unwrap(), OffspringLaw::critical_binary()),
    ] {
        let cfg = SimConfig::new(model, law, vec![0.5, 1.0, 2.0, 3.0], 20_000, 33).unwrap();
        let mut wide = cfg.clone();
        wide.kill_barrier = cfg.kill_barrier.map(|b| 2.0 * b);
        let (a, b) = (estimate_survival(&cfg).unwrap(), estimate_survival(&wide).unwrap());
        for (x, y) in a.levels.iter().zip(&b.levels) {
            assert!((x.u_hat - y.u_hat).abs() < x.half_width, "{x:?} {y:?}");
        }
    }
}

#[test]
fn critical_dominates_thinned_subcritical() {
    let levels = vec![0.5, 1.0, 2.0, 3.0];
    let crit = SimConfig::new(bm(), OffspringLaw::critical_binary(), levels.clone(), 20_000, 41).unwrap();
    let thin = SimConfig::new(bm(), OffspringLaw::new(vec![0.6, 0.0, 0.4]).unwrap(), levels, 20_000, 42).unwrap();
    let (c, s) = (estimate_survival(&crit).unwrap(), estimate_survival(&thin).unwrap());
    for (a, b) in c.levels.iter().zip(&s.levels) {
        let err = (a.half_width.powi(2) + b.half_width.powi(2)).sqrt();
        assert!(a.u_hat + err >= b.u_hat, "{a:?} {b:?}");
    }
}
