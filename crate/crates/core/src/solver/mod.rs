//! Deterministic solution of the branching equation for u(x) = P(M ≥ x).
//!
//! Conditioning on the first branching event and using the independence
//! of S_e and D = S_e − L_e gives, for x ≥ 0,
//!
//!   u(x) = e^{−Φx} + ∫₀ˣ Φe^{−Φ(x−y)} H(y) dy,   H(y) = E[φ(u(y + D))],
//!
//! with Φ = Φ(1) and φ(v) = 1 − F(1 − v). H is approximated by a
//! piecewise-linear function on a uniform grid, which turns the convolution
//! into the exact recurrence u_i = E·u_{i−1} + a·H_{i−1} + b·H_i with
//! E = e^{−Φh}. The resulting nonlinear system is solved by Newton's method
//! (or, optionally, by damped Picard iteration). Each Newton step solves
//! the full linearisation by GMRES, preconditioned with the LU factors of
//! its banded near-field part. Values beyond the grid follow a
//! regime-dependent [`TailModel`] fitted to the current iterate.

mod band;
pub mod checks;
mod gmres;
mod kernel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{DriftRegime, LevyModel};
use crate::offspring::{Criticality, OffspringLaw};
use crate::scale::ScaleEvaluator;
use crate::window::WindowLaw;

use band::BandSystem;
use gmres::gmres;

/// Relative residual for the inner linear solve of each Newton step.
const NEWTON_RTOL: f64 = 1e-10;
pub(crate) use kernel::HatKernel;
pub use kernel::TailModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Newton,
    Picard { omega: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub x_max: f64,
    pub h: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
    /// Width of the exactly discretised part of the D-law; default 10/min(1, Φ(1)).
    pub d_band: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            x_max: 40.0,
            h: 0.05,
            tol: 1e-9,
            max_iter: 10_000,
            method: Method::Newton,
            d_band: None,
        }
    }
}

impl SolverConfig {
    pub fn with_range(x_max: f64, h: f64) -> Self {
        SolverConfig {
            x_max,
            h,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 0.05) {
            return Err(Error::InvalidParameter(format!("h = {} must lie in (0, 0.05]", self.h)));
        }
        if !(self.x_max >= 20.0 * self.h && self.x_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("x_max = {} too small", self.x_max)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if let Method::Picard { omega } = self.method {
            if !(omega > 0.0 && omega <= 1.0) {
                return Err(Error::InvalidParameter(format!("omega = {omega} must lie in (0, 1]")));
            }
        }
        if let Some(d) = self.d_band {
            if !(d >= self.h) {
                return Err(Error::InvalidParameter("d_band must be >= h".into()));
            }
        }
        Ok(())
    }
}

/// u sampled on x_i = i·h, i = 0..=n, with a tail model beyond x_n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub h: f64,
    pub values: Vec<f64>,
    pub tail: TailModel,
}

impl SurvivalCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.values.len() - 1)
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.x(i)).collect()
    }

    /// Linear interpolation on the grid, the tail model beyond it, and the
    /// convention u = 0 on the negative half-line.
    pub fn value(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let n = self.values.len() - 1;
        let x_end = self.x_max();
        if x >= x_end {
            return self.values[n] * self.tail.factor(x_end, x);
        }
        let t = x / self.h;
        let i = (t.floor() as usize).min(n - 1);
        let f = t - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// Copy with every value multiplied by `factor` (clipped to 1).
    pub fn scaled(&self, factor: f64) -> SurvivalCurve {
        SurvivalCurve {
            h: self.h,
            values: self.values.iter().map(|v| (v * factor).min(1.0)).collect(),
            tail: self.tail.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: Method,
    pub iterations: usize,
    pub final_update: f64,
    pub converged: bool,
    /// Sup-norm update per iteration.
    pub history: Vec<f64>,
    /// Total mass of the discretised D-law (1 up to truncation).
    pub kernel_mass: f64,
}

/// Grid problem shared by the solver and the residual checks.
#[derive(Clone, Debug)]
pub(crate) struct Problem {
    pub law: OffspringLaw,
    pub kernel: HatKernel,
    pub phi1: f64,
    pub h: f64,
    pub n: usize,
    pub e: f64,
    pub wa: f64,
    pub wb: f64,
    pub tail_kind: TailKind,
}

#[derive(Clone, Debug)]
pub(crate) enum TailKind {
    Exponential,
    Fixed(TailModel),
}

impl Problem {
    pub fn new(window: &WindowLaw, law: &OffspringLaw, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let model = *window.model();
        let phi1 = window.phi1();
        let h = cfg.h;
        let n = (cfg.x_max / h).round() as usize;
        let d_band = cfg.d_band.unwrap_or(10.0 / phi1.min(1.0));
        let kernel = HatKernel::d_law(window, h, d_band)?;
        let e = (-phi1 * h).exp();
        let one_minus = -(-phi1 * h).exp_m1();
        let wb = 1.0 - one_minus / (phi1 * h);
        let wa = one_minus - wb;
        let x_end = n as f64 * h;
        let tail_kind = match (law.classify(), model.regime()) {
            (Criticality::Subcritical, _) | (_, DriftRegime::DriftDown) => TailKind::Exponential,
            (Criticality::Critical, DriftRegime::DriftUp) => TailKind::Fixed(TailModel::Inverse),
            (Criticality::Critical, DriftRegime::Oscillating) => {
                let w = ScaleEvaluator::auto(model, 0.0)?;
                TailKind::Fixed(kernel::scale_envelope(&w, x_end, kernel.far_reach())?)
            }
        };
        Ok(Problem {
            law: law.clone(),
            kernel,
            phi1,
            h,
            n,
            e,
            wa,
            wb,
            tail_kind,
        })
    }

    pub fn x_end(&self) -> f64 {
        self.n as f64 * self.h
    }

    /// Tail model implied by the iterate u.
    pub fn tail_model(&self, u: &[f64], previous: Option<&TailModel>) -> TailModel {
        match &self.tail_kind {
            TailKind::Fixed(t) => t.clone(),
            TailKind::Exponential => {
                let n = self.n;
                let m = (n / 10).max(1);
                let rate = (u[n - m] / u[n]).ln() / (m as f64 * self.h);
                if rate.is_finite() && rate > 0.0 {
                    TailModel::Exponential { rate }
                } else {
                    previous.cloned().unwrap_or(TailModel::Exponential { rate: self.phi1 })
                }
            }
        }
    }

    /// Part of H_i, i = 0..=n, from grid offsets past x_n and from far
    /// D-cells; inside the grid φ(u) is interpolated linearly.
    pub fn lagged(&self, u: &[f64], g: &[f64], tail: &TailModel) -> Vec<f64> {
        self.lagged_rows(u, g, tail, false).into_iter().map(|(s, _)| s).collect()
    }

    /// As [`Problem::lagged`], with the ∂/∂u_n of the terms beyond x_n.
    fn lagged_rows(&self, u: &[f64], g: &[f64], tail: &TailModel, deriv: bool) -> Vec<(f64, f64)> {
        let n = self.n;
        let x_end = self.x_end();
        let un = u[n];
        let beyond = |f: f64, w: f64, s: &mut f64, ds: &mut f64| {
            *s += w * self.law.phi_fn(un * f);
            if deriv {
                *ds += w * self.law.phi_fn_prime(un * f) * f;
            }
        };
        (0..=n)
            .map(|i| {
                let (mut s, mut ds) = (0.0, 0.0);
                for j in (n - i + 1)..=self.kernel.band() {
                    let f = tail.factor(x_end, (i + j) as f64 * self.h);
                    beyond(f, self.kernel.w[j], &mut s, &mut ds);
                }
                let xi = i as f64 * self.h;
                for c in &self.kernel.far {
                    if i + c.k < n {
                        s += c.m * ((1.0 - c.f) * g[i + c.k] + c.f * g[i + c.k + 1]);
                    } else {
                        beyond(tail.factor(x_end, xi + c.z), c.m, &mut s, &mut ds);
                    }
                }
                (s, ds)
            })
            .collect()
    }

    /// In-grid far-cell part of the directional derivative of H_i, given
    /// dgv_k = φ'(u_k)v_k.
    fn far_action(&self, dgv: &[f64], i: usize) -> f64 {
        let mut s = 0.0;
        for c in &self.kernel.far {
            if i + c.k >= self.n {
                break;
            }
            s += c.m * ((1.0 - c.f) * dgv[i + c.k] + c.f * dgv[i + c.k + 1]);
        }
        s
    }

    /// Grid part of H_i (or of its derivative): Σ_{0 ≤ j ≤ J, i+j ≤ n} w_j a_{i+j}.
    fn band_sum(&self, a: &[f64], i: usize) -> f64 {
        let hi = self.kernel.band().min(self.n - i);
        (0..=hi).map(|j| self.kernel.w[j] * a[i + j]).sum()
    }

    fn h_values(&self, u: &[f64], tail: &TailModel) -> Vec<f64> {
        let g: Vec<f64> = u.iter().map(|&v| self.law.phi_fn(v)).collect();
        let lag = self.lagged(u, &g, tail);
        (0..=self.n).map(|i| self.band_sum(&g, i) + lag[i]).collect()
    }

    /// T(u): the right-hand side evaluated with H from u.
    fn apply(&self, u: &[f64], tail: &TailModel) -> Vec<f64> {
        let hv = self.h_values(u, tail);
        let mut out = vec![0.0; self.n + 1];
        out[0] = 1.0;
        for i in 1..=self.n {
            out[i] = self.e * out[i - 1] + self.wa * hv[i - 1] + self.wb * hv[i];
        }
        out
    }

    fn residual(&self, u: &[f64], hv: &[f64]) -> Vec<f64> {
        (1..=self.n)
            .map(|i| u[i] - self.e * u[i - 1] - self.wa * hv[i - 1] - self.wb * hv[i])
            .collect()
    }

    fn initial(&self) -> Vec<f64> {
        let polynomial = self.law.is_critical() && !matches!(self.tail_kind, TailKind::Exponential);
        (0..=self.n)
            .map(|i| {
                let x = i as f64 * self.h;
                let e = (-self.phi1 * x).exp();
                if polynomial {
                    e.max(1.0 / (1.0 + x))
                } else {
                    e
                }
            })
            .collect()
    }
}

/// Solves for u on [0, x_max].
pub fn solve_u(model: &LevyModel, law: &OffspringLaw, cfg: &SolverConfig) -> Result<(SurvivalCurve, SolverReport)> {
    let window = WindowLaw::new(*model)?;
    solve_with_window(&window, law, cfg)
}

/// As [`solve_u`], reusing a window law.
pub fn solve_with_window(
    window: &WindowLaw,
    law: &OffspringLaw,
    cfg: &SolverConfig,
) -> Result<(SurvivalCurve, SolverReport)> {
    let p = Problem::new(window, law, cfg)?;
    let (values, tail, report) = match cfg.method {
        Method::Newton => newton(&p, cfg)?,
        Method::Picard { omega } => picard(&p, cfg, omega)?,
    };
    Ok((
        SurvivalCurve {
            h: cfg.h,
            values,
            tail,
        },
        report,
    ))
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn newton(p: &Problem, cfg: &SolverConfig) -> Result<(Vec<f64>, TailModel, SolverReport)> {
    let n = p.n;
    let jb = p.kernel.band();
    let mut u = p.initial();
    let mut tail = p.tail_model(&u, None);
    let mut history = Vec::new();
    for iter in 1..=cfg.max_iter {
        let dg: Vec<f64> = u.iter().map(|&v| p.law.phi_fn_prime(v)).collect();
        let g: Vec<f64> = u.iter().map(|&v| p.law.phi_fn(v)).collect();
        let rows = p.lagged_rows(&u, &g, &tail, true);
        let hv: Vec<f64> = (0..=n).map(|i| p.band_sum(&g, i) + rows[i].0).collect();
        let beyond: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let r = p.residual(&u, &hv);
        let r_norm = sup(&r);

        // Banded part of the Jacobian: row i−1 holds ∂r_i/∂u_k in column k−1.
        let mut sys = BandSystem::new(n, jb);
        for i in 1..=n {
            let row = i - 1;
            sys.add(row, row, 1.0);
            if i >= 2 {
                sys.add(row, row - 1, -p.e);
            }
            for (coef, base) in [(p.wa, i - 1), (p.wb, i)] {
                for j in 0..=jb {
                    let k = base + j;
                    if k > n {
                        break;
                    }
                    if k >= 1 {
                        sys.add(row, k - 1, -coef * p.kernel.w[j] * dg[k]);
                    }
                }
            }
        }
        let lu = sys
            .factor()
            .ok_or_else(|| Error::Degenerate("singular Newton system".into()))?;
        // Full Jacobian action, including far cells and the tail's u_n dependence.
        let jac = |d: &[f64]| -> Vec<f64> {
            let mut v = vec![0.0; n + 1];
            v[1..].copy_from_slice(d);
            let dgv: Vec<f64> = v.iter().zip(&dg).map(|(a, b)| a * b).collect();
            let dh: Vec<f64> = (0..=n)
                .into_par_iter()
                .map(|i| p.band_sum(&dgv, i) + p.far_action(&dgv, i) + beyond[i] * v[n])
                .collect();
            (1..=n)
                .map(|i| v[i] - p.e * v[i - 1] - p.wa * dh[i - 1] - p.wb * dh[i])
                .collect()
        };
        let rhs: Vec<f64> = r.iter().map(|a| -a).collect();
        let (delta, _) = gmres(jac, |b| lu.solve(b), &rhs, NEWTON_RTOL, 40, 400);

        let mut step = 1.0;
        let mut next = u.clone();
        for _ in 0..30 {
            for i in 1..=n {
                next[i] = (u[i] + step * delta[i - 1]).clamp(0.0, 1.0);
            }
            let r2 = sup(&p.residual(&next, &p.h_values(&next, &tail)));
            if r2 <= r_norm || r2 < cfg.tol * 1e-3 {
                break;
            }
            step *= 0.5;
        }
        let update = next.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        u = next;
        let new_tail = p.tail_model(&u, Some(&tail));
        let tail_moved = tail != new_tail;
        tail = new_tail;
        history.push(update);
        if update <= cfg.tol && (!tail_moved || update == 0.0 || iter > 1) {
            return Ok((
                u,
                tail,
                SolverReport {
                    method: cfg.method,
                    iterations: iter,
                    final_update: update,
                    converged: true,
                    history,
                    kernel_mass: p.kernel.mass(),
                },
            ));
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        last_update: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

fn picard(p: &Problem, cfg: &SolverConfig, omega: f64) -> Result<(Vec<f64>, TailModel, SolverReport)> {
    let mut u = p.initial();
    let mut tail = p.tail_model(&u, None);
    let mut history = Vec::new();
    for iter in 1..=cfg.max_iter {
        let t = p.apply(&u, &tail);
        let mut next: Vec<f64> = u
            .iter()
            .zip(&t)
            .map(|(a, b)| ((1.0 - omega) * a + omega * b).clamp(0.0, 1.0))
            .collect();
        for i in 1..next.len() {
            next[i] = next[i].min(next[i - 1]);
        }
        let update = next.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        u = next;
        tail = p.tail_model(&u, Some(&tail));
        history.push(update);
        if update <= cfg.tol {
            return Ok((
                u,
                tail,
                SolverReport {
                    method: cfg.method,
                    iterations: iter,
                    final_update: update,
                    converged: true,
                    history,
                    kernel_mass: p.kernel.mass(),
                },
            ));
        }
    }
    let keep = history.len().saturating_sub(100);
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        last_update: history.last().copied().unwrap_or(f64::NAN),
        history: history.split_off(keep),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_branching_reproduces_sup_law() {
        let m = LevyModel::brownian(0.0, 1.0).unwrap();
        let law = OffspringLaw::new(vec![1.0]).unwrap();
        let (curve, rep) = solve_u(&m, &law, &SolverConfig::with_range(10.0, 0.05)).unwrap();
        assert!(rep.converged);
        for (i, v) in curve.values.iter().enumerate() {
            let e = (-(2f64.sqrt()) * curve.x(i)).exp();
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn picard_and_newton_agree_subcritical() {
        let m = LevyModel::brownian(0.0, 1.0).unwrap();
        let law = OffspringLaw::new(vec![0.75, 0.0, 0.25]).unwrap();
        let base = SolverConfig::with_range(10.0, 0.05);
        let (a, _) = solve_u(&m, &law, &base).unwrap();
        let picard = SolverConfig {
            method: Method::Picard { omega: 0.7 },
            ..base
        };
        let (b, rep) = solve_u(&m, &law, &picard).unwrap();
        assert!(rep.iterations > 1);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-7, "{x} {y}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SolverConfig::with_range(10.0, 0.1).validate().is_err());
        assert!(SolverConfig {
            method: Method::Picard { omega: 1.5 },
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn curve_value_conventions() {
        let c = SurvivalCurve {
            h: 0.5,
            values: vec![1.0, 0.5, 0.25],
            tail: TailModel::Inverse,
        };
        assert_eq!(c.value(-1.0), 0.0);
        assert!((c.value(0.25) - 0.75).abs() < 1e-15);
        assert!((c.value(2.0) - 0.125).abs() < 1e-15);
    }
}
