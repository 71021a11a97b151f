#![allow(dead_code)]

use snbranch_core::quad::gl20;
use snbranch_core::scale::ScaleEvaluator;
use snbranch_core::window::WindowLaw;
use snbranch_core::LevyModel;

/// One member per catalog variant.
pub fn catalog() -> Vec<LevyModel> {
    vec![
        LevyModel::brownian(0.0, 1.0).unwrap(),
        LevyModel::stable(1.5, 1.0).unwrap(),
        LevyModel::brownian_exp_jumps(1.0, 0.0, 1.0, 2.0).unwrap(),
        LevyModel::stable_with_drift(-0.5, 1.5, 1.0).unwrap(),
    ]
}

/// ∫_0^∞ f on geometric cells out to `z_max`, with the first cell on a
/// square-root substitution.
pub fn integrate_half_line(f: impl Fn(f64) -> f64, first: f64, ratio: f64, z_max: f64) -> f64 {
    let g = gl20();
    let mut total = g.integrate_sqrt_left(0.0, first, &f);
    let mut a = first;
    while a < z_max {
        let b = (a * ratio).min(z_max);
        total += g.integrate(a, b, &f);
        a = b;
    }
    total
}

/// ∫_0^∞ V^(q)(z) dz: quadrature to `z_max`, then a power-law extension
/// fitted on [z_max/2, z_max].
pub fn remainder_mass(scale: &ScaleEvaluator, z_max: f64) -> f64 {
    let v = |z: f64| scale.remainder(z).unwrap();
    let body = integrate_half_line(v, 0.1, 1.1, z_max);
    let (v1, v2) = (v(0.5 * z_max), v(z_max));
    if v2 <= 0.0 || v1 <= 0.0 {
        return body;
    }
    let p = (v1 / v2).ln() / 2f64.ln();
    let tail = if p > 1.0 { v2 * z_max / (p - 1.0) } else { 0.0 };
    body + tail
}

/// Density of S_e − D at z, by direct convolution.
pub fn difference_density(w: &WindowLaw, z: f64) -> f64 {
    let phi = w.phi1();
    let f = |d: f64| phi * (-phi * (z + d)).exp() * w.d_density(d).unwrap();
    let start = (-z).max(0.0);
    let g = gl20();
    let end = start + 50.0 / phi;
    let mut total = if start == 0.0 {
        g.integrate_sqrt_left(0.0, 0.05, f)
    } else {
        g.integrate(start, start + 0.05, f)
    };
    let mut a = start + 0.05;
    while a < end {
        let b = (a * 1.15).max(a + 0.05).min(end);
        total += g.integrate(a, b, f);
        a = b;
    }
    if z >= 0.0 {
        total += w.atom0() * phi * (-phi * z).exp();
    }
    total
}
