//! Discretisation of v ↦ ∫v(y + z)μ(dz) on a uniform grid, for μ the law of
//! D or the remainder measure V^(q)(z)dz.
//!
//! On [0, band] μ is integrated against hat functions of the grid, so
//! piecewise-linear v are handled exactly. Beyond that μ is lumped onto
//! geometric cells with ratio [`FAR_RATIO`], each carrying its mass at √(ab).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quad::gl8;
use crate::scale::{clamp_roundoff, ScaleEvaluator};
use crate::window::WindowLaw;

const FAR_RATIO: f64 = 1.05;
/// Far cells stop once the remaining mass is below this.
const FAR_TAIL: f64 = 1e-13;
const FAR_Z_MAX: f64 = 1e8;

/// A cell of the far part at offset z = (k + f)h carrying mass m.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FarCell {
    pub k: usize,
    pub f: f64,
    pub m: f64,
    pub z: f64,
}

impl FarCell {
    fn at(z: f64, m: f64, h: f64) -> Self {
        let t = z / h;
        let k = t.floor();
        FarCell {
            k: if k < (usize::MAX / 4) as f64 { k as usize } else { usize::MAX / 4 },
            f: t - k,
            m,
            z,
        }
    }
}

/// A measure on [0, ∞) discretised against hat functions of a uniform grid
/// near zero and lumped onto geometric cells far out.
#[derive(Clone, Debug)]
pub(crate) struct HatKernel {
    pub h: f64,
    /// Weight of offset j·h, j = 0..=J; an atom at zero is included in w[0].
    pub w: Vec<f64>,
    /// The part of w[j] coming from [jh, (j+1)h] (the atom included).
    pub w_right: Vec<f64>,
    /// Cells past J·h, sorted by offset.
    pub far: Vec<FarCell>,
}

/// Hat weights of `density` on [0, J·h]; the first cell allows a
/// square-root singularity at zero.
fn near_weights(
    h: f64,
    j_max: usize,
    atom: f64,
    density: impl Fn(f64) -> Result<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut w = vec![0.0; j_max + 1];
    let mut w_right = vec![0.0; j_max + 1];
    w[0] = atom;
    w_right[0] = atom;
    let g = gl8();
    for k in 0..j_max {
        let a = k as f64 * h;
        let b = a + h;
        let mut err = None;
        let mut f = |z: f64, right: bool| -> f64 {
            match density(z) {
                Ok(d) => {
                    let t = (z - a) / h;
                    d * if right { t } else { 1.0 - t }
                }
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        };
        let (left, right) = if k == 0 {
            (
                g.integrate_sqrt_left(a, b, |z| f(z, false)),
                g.integrate_sqrt_left(a, b, |z| f(z, true)),
            )
        } else {
            (g.integrate(a, b, |z| f(z, false)), g.integrate(a, b, |z| f(z, true)))
        };
        if let Some(e) = err {
            return Err(e);
        }
        w[k] += left;
        w_right[k] += left;
        w[k + 1] += right;
    }
    Ok((w, w_right))
}

impl HatKernel {
    /// Law of D; far cells carry P(a < D ≤ b) at √(ab).
    pub fn d_law(window: &WindowLaw, h: f64, d_band: f64) -> Result<Self> {
        let j_max = (d_band / h).ceil() as usize;
        let (w, w_right) = near_weights(h, j_max, window.atom0(), |z| window.d_density(z))?;
        let mut far = Vec::new();
        let mut a = j_max as f64 * h;
        let mut tail_a = window.d_tail(a)?;
        while tail_a > FAR_TAIL && a < FAR_Z_MAX {
            let b = a * FAR_RATIO;
            let tail_b = window.d_tail(b)?.min(tail_a);
            far.push(FarCell::at((a * b).sqrt(), tail_a - tail_b, h));
            a = b;
            tail_a = tail_b;
        }
        if tail_a > 0.0 {
            far.push(FarCell::at(a, tail_a, h));
        }
        Ok(HatKernel { h, w, w_right, far })
    }

    /// The measure V^(q)(z)dz, V^(q) = e^{Φ(q)z}/Ψ′(Φ(q)) − W^(q), of total
    /// mass 1/q − Φ′(q)/Φ(q); far cells are integrated directly and the
    /// unresolved remainder is put on the last cell.
    pub fn remainder(scale: &ScaleEvaluator, h: f64, band: f64) -> Result<Self> {
        let sol = scale.phi();
        let total = 1.0 / scale.q() - sol.phi_prime()? / sol.phi;
        let j_max = (band / h).ceil() as usize;
        let (w, w_right) = near_weights(h, j_max, 0.0, |z| Ok(clamp_roundoff(scale.remainder(z)?).max(0.0)))?;
        let mut acc: f64 = w.iter().sum();
        let g = gl8();
        let mut far = Vec::new();
        let mut a = j_max as f64 * h;
        while total - acc > FAR_TAIL * total && a < FAR_Z_MAX {
            let b = a * FAR_RATIO;
            let mut err = None;
            let m = g.integrate(a, b, |z| match scale.remainder(z) {
                Ok(v) => clamp_roundoff(v).max(0.0),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            far.push(FarCell::at((a * b).sqrt(), m, h));
            acc += m;
            a = b;
        }
        if total - acc > 0.0 {
            far.push(FarCell::at(a, total - acc, h));
        }
        Ok(HatKernel { h, w, w_right, far })
    }

    pub fn band(&self) -> usize {
        self.w.len() - 1
    }

    pub fn mass(&self) -> f64 {
        self.w.iter().sum::<f64>() + self.far.iter().map(|c| c.m).sum::<f64>()
    }

    pub fn far_reach(&self) -> f64 {
        self.far.last().map_or(self.band() as f64 * self.h, |c| c.z)
    }

    /// Σ w_j a(i + j) + Σ m·a(x_i + z) with a linear between grid points;
    /// `outside` gives a(x) for x off [0, n·h]. a may jump at zero: for
    /// i < 0 the hat at zero only sees a(0) on its right half, its left half
    /// takes `outside` at −h/2.
    pub fn correlate(&self, a: &[f64], i: isize, outside: impl Fn(f64) -> f64) -> f64 {
        let n = a.len() as isize - 1;
        let h = self.h;
        let mut s = 0.0;
        for (j, w) in self.w.iter().enumerate() {
            let k = i + j as isize;
            s += if k == 0 && i < 0 {
                self.w_right[j] * a[0] + (w - self.w_right[j]) * outside(-0.5 * h)
            } else if (0..=n).contains(&k) {
                w * a[k as usize]
            } else {
                w * outside(k as f64 * h)
            };
        }
        let xi = i as f64 * h;
        for c in &self.far {
            let x = xi + c.z;
            let k = i.saturating_add(c.k.min(isize::MAX as usize / 4) as isize);
            s += if x < 0.0 || k >= n {
                c.m * outside(x)
            } else {
                c.m * ((1.0 - c.f) * a[k as usize] + c.f * a[k as usize + 1])
            };
        }
        s
    }
}

/// Form of u beyond the last grid point, scaled by u(X).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailModel {
    /// u(x) = u(X)e^{−r(x−X)}.
    Exponential { rate: f64 },
    /// u(x) = u(X)·X/x.
    Inverse,
    /// u(x) = u(X)·XW(X)/(xW(x)), tabulated on log-spaced nodes.
    ScaleEnvelope { xs: Vec<f64>, ratio: Vec<f64> },
}

impl TailModel {
    /// u(x)/u(X) for x ≥ X.
    pub fn factor(&self, x_end: f64, x: f64) -> f64 {
        match self {
            TailModel::Exponential { rate } => (-rate * (x - x_end)).exp(),
            TailModel::Inverse => x_end / x,
            TailModel::ScaleEnvelope { xs, ratio } => {
                let n = xs.len();
                if x <= xs[0] {
                    return ratio[0];
                }
                if x >= xs[n - 1] {
                    // Continue with the last log-log slope.
                    let s = (ratio[n - 1] / ratio[n - 2]).ln() / (xs[n - 1] / xs[n - 2]).ln();
                    return ratio[n - 1] * (x / xs[n - 1]).powf(s);
                }
                // Nodes are log-uniform when built here; guess, then verify.
                let lx = x.ln();
                let (l0, dl) = (xs[0].ln(), (xs[1] / xs[0]).ln());
                let guess = (((lx - l0) / dl) as usize).min(n - 2);
                let k = if xs[guess] <= x && x < xs[guess + 1] {
                    guess
                } else {
                    xs.partition_point(|&v| v <= x) - 1
                };
                let t = (lx - xs[k].ln()) / (xs[k + 1] / xs[k]).ln();
                ratio[k] * (ratio[k + 1] / ratio[k]).powf(t)
            }
        }
    }
}

/// Tabulates XW(X)/(xW(x)) on [X, X + reach].
pub(crate) fn scale_envelope(w: &ScaleEvaluator, x_end: f64, reach: f64) -> Result<TailModel> {
    let n = 400;
    let hi = x_end + reach.max(x_end);
    let (la, lb) = (x_end.ln(), hi.ln());
    let base = x_end * w.w(x_end)?;
    let mut xs = Vec::with_capacity(n);
    let mut ratio = Vec::with_capacity(n);
    for k in 0..n {
        let x = (la + (lb - la) * k as f64 / (n - 1) as f64).exp();
        xs.push(x);
        ratio.push(base / (x * w.w(x)?));
    }
    Ok(TailModel::ScaleEnvelope { xs, ratio })
}
