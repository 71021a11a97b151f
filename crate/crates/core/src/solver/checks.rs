//! Post-hoc checks on converged curves.
//!
//! The remainder Δ is recovered from its definition
//! Δ(x) = u(x) − E[φ(u(x − L_e)); L_e < x], the expectation being a
//! quadrature against the potential density θ^(1). Both renewal equations
//! are then evaluated as residuals, independently of the (S_e, D) form used
//! by the solver.

use serde::{Deserialize, Serialize};

use super::kernel::HatKernel;
use super::SurvivalCurve;
use crate::error::{Error, Result};
use crate::levy::DriftRegime;
use crate::offspring::OffspringLaw;
use crate::quad::{gl8, tanh_sinh};
use crate::scale::ScaleEvaluator;
use crate::window::WindowLaw;

/// Δ is resolved while |Δ| ≥ max(DELTA_FLOOR, DELTA_REL·u); below that it
/// is dominated by the O(h²) error of the curve.
pub const DELTA_FLOOR: f64 = 1e-9;
pub const DELTA_REL: f64 = 1e-3;
/// Residual checks run on x ∈ [RESIDUAL_FROM, X/2].
pub const RESIDUAL_FROM: f64 = 1.0;
/// Tail completions above this share of the integral are flagged.
pub const TAIL_SHARE_LIMIT: f64 = 0.1;
const TAIL_RATIO: f64 = 1.1;
const TAIL_REACH: f64 = 1e4;

/// Δ on the grid of a curve and on a stretch of the negative half-line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaProfile {
    pub h: f64,
    /// Δ(i·h), i = 0..=n.
    pub values: Vec<f64>,
    /// Δ(−k·h), k = 0..=m; entry 0 is the left limit at zero.
    pub negative: Vec<f64>,
    /// Largest grid x up to which Δ is resolved (see [`DELTA_REL`]).
    pub resolved_to: f64,
    /// (A, r) with Δ(x) ≈ A·e^{−rx} fitted on the resolved range, used
    /// beyond it.
    pub envelope: Option<(f64, f64)>,
}

impl DeltaProfile {
    pub fn value(&self, x: f64) -> f64 {
        if x < 0.0 {
            let t = -x / self.h;
            let k = t.floor() as usize;
            if k + 1 >= self.negative.len() {
                return 0.0;
            }
            let f = t - k as f64;
            return self.negative[k] * (1.0 - f) + self.negative[k + 1] * f;
        }
        if x > self.resolved_to {
            return self.envelope.map_or(0.0, |(a, r)| a * (-r * x).exp());
        }
        let n = self.values.len() - 1;
        let t = x / self.h;
        let i = (t.floor() as usize).min(n.saturating_sub(1));
        let f = t - i as f64;
        self.values[i] * (1.0 - f) + self.values[(i + 1).min(n)] * f
    }

    /// Fitted exponential decay rate of |Δ| on the resolved range.
    pub fn decay_rate(&self) -> Option<f64> {
        self.envelope.map(|(_, r)| r)
    }

    /// Δ at grid point i, continued by the envelope past the resolved range.
    fn at(&self, i: usize) -> f64 {
        let x = i as f64 * self.h;
        if x > self.resolved_to {
            self.envelope.map_or(0.0, |(a, r)| a * (-r * x).exp())
        } else {
            self.values[i]
        }
    }
}

/// Width of the near band used for remainder kernels.
fn band_for(phi: f64) -> f64 {
    10.0 / phi.min(1.0)
}

/// Running ∫_{x_0}^{x_i} Φ′e^{−Φ(x_i − y)} f(y) dy for f linear between
/// nodes, exact on each cell.
fn exponential_sweep(phi: f64, phi_prime: f64, h: f64, f: &[f64]) -> Vec<f64> {
    let e = (-phi * h).exp();
    let one_minus = -(-phi * h).exp_m1();
    let b = 1.0 - one_minus / (phi * h);
    let a = one_minus - b;
    let c = phi_prime / phi;
    let mut out = vec![0.0; f.len()];
    for i in 1..f.len() {
        out[i] = e * out[i - 1] + c * (a * f[i - 1] + b * f[i]);
    }
    out
}

/// Recovers Δ from a converged curve.
pub fn reconstruct_delta(curve: &SurvivalCurve, window: &WindowLaw, law: &OffspringLaw) -> Result<DeltaProfile> {
    let h = curve.h;
    let scale = window.scale();
    let phi = window.phi1();
    let phi_prime = scale.phi().phi_prime()?;
    let kernel = HatKernel::remainder(scale, h, band_for(phi))?;
    let g: Vec<f64> = curve.values.iter().map(|&v| law.phi_fn(v)).collect();
    let outside = |x: f64| if x < 0.0 { 0.0 } else { law.phi_fn(curve.value(x)) };

    let sweep = exponential_sweep(phi, phi_prime, h, &g);
    let values: Vec<f64> = (0..curve.len())
        .map(|i| curve.values[i] - sweep[i] - kernel.correlate(&g, i as isize, outside))
        .collect();
    let m = (60.0 / phi.min(1.0) / h).ceil() as isize;
    let negative: Vec<f64> = (0..=m).map(|k| -kernel.correlate(&g, -k, outside)).collect();

    let last = values
        .iter()
        .zip(&curve.values)
        .position(|(d, u)| d.abs() < DELTA_FLOOR.max(DELTA_REL * u))
        .unwrap_or(values.len());
    let resolved_to = last.saturating_sub(1) as f64 * h;
    let lo = if resolved_to >= 3.0 { 2.0 } else { 0.0 };
    let pts: Vec<(f64, f64)> = (0..last)
        .map(|i| (i as f64 * h, values[i]))
        .filter(|(x, d)| *x >= lo && *d != 0.0)
        .map(|(x, d)| (x, d.abs().ln()))
        .collect();
    let envelope = line_fit(&pts).map(|(icept, slope)| {
        let sign = values[(lo / h) as usize].signum();
        (sign * icept.exp(), -slope)
    });
    Ok(DeltaProfile {
        h,
        values,
        negative,
        resolved_to,
        envelope,
    })
}

/// Least-squares (intercept, slope); None with fewer than three points.
fn line_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Maximum residual of a renewal identity over x ∈ [1, X/2].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenewalResidual {
    pub max_abs: f64,
    pub argmax: f64,
    /// Largest share of the right-hand side contributed beyond the grid.
    pub tail_share: f64,
    /// False when `tail_share` exceeds [`TAIL_SHARE_LIMIT`].
    pub reliable: bool,
    /// End of the initial range on which the tail share stays within the
    /// limit, and the largest residual there.
    pub reliable_to: f64,
    pub max_abs_reliable: f64,
}

fn residual_rows(curve: &SurvivalCurve) -> std::ops::RangeInclusive<usize> {
    let lo = (RESIDUAL_FROM / curve.h).round() as usize;
    let hi = (curve.len() - 1) / 2;
    lo..=hi.max(lo)
}

fn summarize(curve: &SurvivalCurve, rows: &[(usize, f64, f64)]) -> RenewalResidual {
    let mut out = RenewalResidual {
        max_abs: 0.0,
        argmax: 0.0,
        tail_share: 0.0,
        reliable: true,
        reliable_to: 0.0,
        max_abs_reliable: 0.0,
    };
    let mut within = true;
    for &(i, r, share) in rows {
        if r.abs() > out.max_abs {
            out.max_abs = r.abs();
            out.argmax = curve.x(i);
        }
        out.tail_share = out.tail_share.max(share);
        within &= share <= TAIL_SHARE_LIMIT;
        if within {
            out.reliable_to = curve.x(i);
            out.max_abs_reliable = out.max_abs_reliable.max(r.abs());
        }
    }
    out.reliable = out.tail_share <= TAIL_SHARE_LIMIT;
    out
}

/// Residual of u − Δ = ∫₀^∞ (σ²u²/2 − R(u) − Δ)(x + z) W(z) dz, W = W^(0),
/// for critical laws and Ψ′(0⁺) ≥ 0.
pub fn critical_renewal_residual(
    curve: &SurvivalCurve,
    delta: &DeltaProfile,
    window: &WindowLaw,
    law: &OffspringLaw,
) -> Result<RenewalResidual> {
    if !law.is_critical() {
        return Err(Error::Domain("critical renewal identity needs a critical law".into()));
    }
    let model = *window.model();
    if model.regime() == DriftRegime::DriftDown {
        return Err(Error::Domain("critical renewal identity needs Ψ′(0+) ≥ 0".into()));
    }
    let w = ScaleEvaluator::auto(model, 0.0)?;
    let h = curve.h;
    let n = curve.len() - 1;
    let x_end = curve.x_max();
    let half_s2 = 0.5 * law.sigma2();
    let integrand = |u: f64, d: f64| half_s2 * u * u - law.remainder_r(u) - d;
    let gl = gl8();
    let nodes: Vec<(f64, f64)> = gl.unit_rule().collect();

    // Integrand at the quadrature nodes of each grid cell, and W at the
    // matching offsets.
    let gtab: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            nodes
                .iter()
                .map(|&(t, _)| {
                    let (u0, u1) = (curve.values[c], curve.values[c + 1]);
                    let (d0, d1) = (delta.at(c), delta.at(c + 1));
                    integrand(u0 + t * (u1 - u0), d0 + t * (d1 - d0))
                })
                .collect()
        })
        .collect();
    let mut wtab = Vec::with_capacity(n);
    for j in 0..n {
        let mut row = Vec::with_capacity(nodes.len());
        for &(t, wt) in &nodes {
            row.push(wt * h * w.w((j as f64 + t) * h)?);
        }
        wtab.push(row);
    }

    let mut rows = Vec::new();
    for i in residual_rows(curve) {
        let x = curve.x(i);
        let mut grid_part = 0.0;
        for j in 0..n - i {
            grid_part += gtab[i + j].iter().zip(&wtab[j]).map(|(a, b)| a * b).sum::<f64>();
        }
        let mut tail_part = 0.0;
        let mut a = x_end;
        while a < TAIL_REACH * x_end {
            let b = a * TAIL_RATIO;
            let mut err = None;
            tail_part += gl.integrate(a, b, |y| {
                let wz = w.w(y - x).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    0.0
                });
                integrand(curve.value(y), delta.value(y)) * wz
            });
            if let Some(e) = err {
                return Err(e);
            }
            a = b;
        }
        let rhs = grid_part + tail_part;
        let lhs = curve.values[i] - delta.at(i);
        let share = if rhs != 0.0 { (tail_part / rhs).abs() } else { 0.0 };
        rows.push((i, lhs - rhs, share));
    }
    Ok(summarize(curve, &rows))
}

/// Residual of u = θ^(q) * (g + E[p]Δ) + Δ with q = 1 − E[p] and
/// g = R(u) − σ²u²/2 = φ(u) − E[p]u, for subcritical laws.
pub fn subcritical_renewal_residual(
    curve: &SurvivalCurve,
    delta: &DeltaProfile,
    window: &WindowLaw,
    law: &OffspringLaw,
) -> Result<RenewalResidual> {
    let m1 = law.m1();
    let q = 1.0 - m1;
    if !(q > 0.0) {
        return Err(Error::Domain("subcritical renewal identity needs E[p] < 1".into()));
    }
    let scale = ScaleEvaluator::auto(*window.model(), q)?;
    let phi = scale.phi().phi;
    let phi_prime = scale.phi().phi_prime()?;
    let h = curve.h;
    let n = curve.len() - 1;
    let kernel = HatKernel::remainder(&scale, h, band_for(phi))?;
    let half_s2 = 0.5 * law.sigma2();
    let g = |u: f64| law.remainder_r(u) - half_s2 * u * u;
    let f: Vec<f64> = (0..=n).map(|i| g(curve.values[i]) + m1 * delta.at(i)).collect();
    let outside = |x: f64| {
        if x < 0.0 {
            m1 * delta.value(x)
        } else {
            g(curve.value(x)) + m1 * delta.value(x)
        }
    };
    // The exponential part runs over the negative stretch of Δ first.
    let m = delta.negative.len() - 1;
    let mut ext: Vec<f64> = (1..=m).rev().map(|k| m1 * delta.negative[k]).collect();
    ext.push(m1 * delta.negative[0]);
    // Across zero f jumps by g(1) + E[p](Δ(0) − Δ(0⁻)); the cell (−h, 0]
    // sees the left limit, and the grid starts from f(0).
    let neg_sweep = exponential_sweep(phi, phi_prime, h, &ext);
    let carry = neg_sweep[m];
    let pos_sweep = exponential_sweep(phi, phi_prime, h, &f);
    let e = (-phi * h).exp();

    let mut rows = Vec::new();
    for i in residual_rows(curve) {
        let exp_part = pos_sweep[i] + carry * e.powi(i as i32);
        let far_part = kernel.correlate(&f, i as isize, outside);
        let r = curve.values[i] - delta.at(i) - exp_part - far_part;
        let tail_share = tail_share_of(&kernel, i, n, outside, exp_part + far_part);
        rows.push((i, r, tail_share));
    }
    Ok(summarize(curve, &rows))
}

/// Share of Σ m·f(x_i + z) coming from x_i + z beyond the grid.
fn tail_share_of(kernel: &HatKernel, i: usize, n: usize, outside: impl Fn(f64) -> f64, total: f64) -> f64 {
    let mut s = 0.0;
    for (j, w) in kernel.w.iter().enumerate() {
        if i + j > n {
            s += w * outside((i + j) as f64 * kernel.h);
        }
    }
    for c in &kernel.far {
        if i + c.k >= n {
            s += c.m * outside(i as f64 * kernel.h + c.z);
        }
    }
    if total != 0.0 {
        (s / total).abs()
    } else {
        0.0
    }
}

/// Max relative residual of f(x) = (σ²/2)∫₀^∞ f²(x(1+z)) z^{α−1}(1+z)^{−2α} dz
/// for f_c(x) = x^α/(c + κx)^α, κ = (σ²B(α,α)/2)^{1/α}.
pub fn limit_family_residual(alpha: f64, sigma2: f64, c_param: f64, x_grid: &[f64]) -> Result<f64> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (1, 2]")));
    }
    if !(sigma2 > 0.0) || !(c_param >= 0.0) {
        return Err(Error::InvalidParameter("need sigma2 > 0 and c >= 0".into()));
    }
    let kappa = limit_family_kappa(alpha, sigma2);
    let f = |x: f64| (x / (c_param + kappa * x)).powf(alpha);
    let mut worst: f64 = 0.0;
    for &x in x_grid {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x = {x} must be positive")));
        }
        // z = t/(1 − t) maps (0, 1) onto (0, ∞); dz = dt/(1 − t)².
        let integral = tanh_sinh(0.0, 1.0, 1e-13, |t, _, dt1| {
            let z = t / dt1;
            let fz = f(x * (1.0 + z));
            // z^{α−1}(1+z)^{−2α}/(1 − t)² = t^{α−1}(1 − t)^{α−1}.
            fz * fz * t.powf(alpha - 1.0) * dt1.powf(alpha - 1.0)
        });
        let rhs = 0.5 * sigma2 * integral;
        let lhs = f(x);
        worst = worst.max(((lhs - rhs) / lhs).abs());
    }
    Ok(worst)
}

/// (σ²B(α,α)/2)^{1/α}.
pub fn limit_family_kappa(alpha: f64, sigma2: f64) -> f64 {
    let beta = (2.0 * statrs::function::gamma::ln_gamma(alpha) - statrs::function::gamma::ln_gamma(2.0 * alpha)).exp();
    (0.5 * sigma2 * beta).powf(1.0 / alpha)
}

/// Smallest grid x from which g = R(u) − σ²u²/2 stays negative up to X.
pub fn g_negative_from(curve: &SurvivalCurve, law: &OffspringLaw) -> Option<f64> {
    let half_s2 = 0.5 * law.sigma2();
    let g = |u: f64| law.remainder_r(u) - half_s2 * u * u;
    first_of_final_run(curve, |i| g(curve.values[i]) < 0.0)
}

/// Smallest grid x from which σ²u²/2 − R(u) − Δ ≥ 0 holds up to X.
pub fn bound_chain_from(curve: &SurvivalCurve, delta: &DeltaProfile, law: &OffspringLaw) -> Option<f64> {
    let half_s2 = 0.5 * law.sigma2();
    first_of_final_run(curve, |i| {
        let u = curve.values[i];
        half_s2 * u * u - law.remainder_r(u) - delta.at(i) >= 0.0
    })
}

fn first_of_final_run(curve: &SurvivalCurve, ok: impl Fn(usize) -> bool) -> Option<f64> {
    let n = curve.len() - 1;
    if !ok(n) {
        return None;
    }
    let mut i = n;
    while i > 0 && ok(i - 1) {
        i -= 1;
    }
    Some(curve.x(i))
}

/// Largest violation of 0 ≤ R(u) ≤ E[p³]u³ over the grid (0 when none).
pub fn remainder_bound_violation(curve: &SurvivalCurve, law: &OffspringLaw) -> f64 {
    curve
        .values
        .iter()
        .map(|&u| {
            let r = law.remainder_r(u);
            (-r).max(r - law.m3() * u * u * u).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// γ(x) = xW(x)u(x) with W = W^(0), on grid points with x ≥ `from`.
pub fn gamma_profile(curve: &SurvivalCurve, window: &WindowLaw, from: f64) -> Result<Vec<(f64, f64)>> {
    let w = ScaleEvaluator::auto(*window.model(), 0.0)?;
    (0..curve.len())
        .map(|i| (curve.x(i), curve.values[i]))
        .filter(|(x, _)| *x >= from && *x > 0.0)
        .map(|(x, u)| Ok((x, x * w.w(x)? * u)))
        .collect()
}
