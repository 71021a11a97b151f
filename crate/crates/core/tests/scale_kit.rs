use snbranch_core::quad::gl20;
use snbranch_core::scale::{Backend, PotentialDensity, ScaleEvaluator};
use snbranch_core::LevyModel;

mod common;

/// ∫_0^∞ e^{−βx} W(x) dx, with the tail beyond X completed by the
/// exponential growth rate Φ(q).
fn laplace_of_w(e: &ScaleEvaluator, beta: f64) -> f64 {
    let x_end = 60.0;
    let g = gl20();
    let f = |x: f64| (-beta * x).exp() * e.w(x).unwrap();
    let mut total = g.integrate_sqrt_left(0.0, 0.5, f);
    let mut a = 0.5;
    while a < x_end {
        total += g.integrate(a, a + 0.5, f);
        a += 0.5;
    }
    total + f(x_end) / (beta - e.phi().phi)
}

#[test]
fn laplace_round_trip() {
    for m in common::catalog() {
        for q in [0.0, 1.0] {
            let e = ScaleEvaluator::auto(m, q).unwrap();
            let phi = e.phi().phi;
            for beta in [phi + 0.5, phi + 1.0, phi + 2.0] {
                let got = laplace_of_w(&e, beta);
                let expect = 1.0 / (m.psi(beta) - q);
                assert!((got / expect - 1.0).abs() < 1e-4, "{} q={q} β={beta}: {got} {expect}", m.name());
            }
        }
    }
}

#[test]
fn stable_scale_is_regularly_varying() {
    let m = LevyModel::stable(1.5, 1.0).unwrap();
    let target = 2f64.sqrt();
    for backend in [Backend::ClosedForm, Backend::ContourInversion] {
        let e = ScaleEvaluator::new(m, 0.0, backend).unwrap();
        for x in [0.3, 1.0, 4.0, 25.0] {
            let r = e.w(2.0 * x).unwrap() / e.w(x).unwrap();
            let tol = if backend == Backend::ClosedForm { 1e-12 } else { 1e-5 };
            assert!((r - target).abs() < tol, "{backend:?} x={x}: {r}");
        }
    }
}

#[test]
fn theta_is_a_probability_density() {
    for m in common::catalog() {
        let pd = PotentialDensity::new(m, 1.0).unwrap();
        for i in 0..=400 {
            let z = -20.0 + 0.1 * i as f64;
            assert!(pd.theta(z).unwrap() >= 0.0, "{} z={z}", m.name());
        }
        let s = pd.scale();
        let (phi, dphi) = (s.phi().phi, m.phi_prime(1.0).unwrap());
        let right = common::integrate_half_line(|z| dphi * (-phi * z).exp(), 0.1, 1.2, 60.0 / phi);
        let left = common::remainder_mass(s, 4000.0);
        assert!((right + left - 1.0).abs() < 1e-4, "{}: {}", m.name(), right + left);
    }
}

#[test]
fn brownian_theta_closed_form() {
    let pd = PotentialDensity::new(LevyModel::brownian(0.0, 1.0).unwrap(), 1.0).unwrap();
    let s2 = 2f64.sqrt();
    for i in 0..=200 {
        let z = -10.0 + 0.1 * i as f64;
        let expect = (-s2 * z.abs()).exp() / s2;
        assert!((pd.theta(z).unwrap() - expect).abs() < 1e-6);
    }
}

#[test]
fn backends_agree() {
    let models = [
        LevyModel::brownian(0.3, 1.0).unwrap(),
        LevyModel::brownian(0.0, 1.0).unwrap(),
        LevyModel::stable(1.5, 1.0).unwrap(),
        LevyModel::stable(1.8, 0.7).unwrap(),
        LevyModel::brownian_exp_jumps(1.0, 1.0, 1.0, 2.0).unwrap(),
        LevyModel::brownian_exp_jumps(0.2, 1.0, 1.0, 2.0).unwrap(),
    ];
    for m in models {
        for q in [0.0, 0.5, 1.0] {
            let closed = ScaleEvaluator::new(m, q, Backend::ClosedForm).unwrap();
            let contour = ScaleEvaluator::new(m, q, Backend::ContourInversion).unwrap();
            for i in 0..=40 {
                let x = 0.1 + 0.2475 * i as f64;
                let (a, b) = (closed.w(x).unwrap(), contour.w(x).unwrap());
                assert!((a / b - 1.0).abs() < 1e-6, "{} q={q} x={x}: {a} {b}", m.name());
            }
        }
    }
}
