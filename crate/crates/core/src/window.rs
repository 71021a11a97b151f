//! Law of the exponential window (S_e, L_e) for an independent unit-rate
//! exponential time e.
//!
//! S_e is exponential with rate Φ(1) and D = S_e − L_e is independent of
//! S_e. D has an atom W^(1)(0)/Φ(1) at zero (bounded variation only) and
//! density f_D = W^(1)′/Φ(1) − W^(1) = V − V′/Φ(1) on (0, ∞), the second
//! form being free of cancellation. Its transform is
//! E[e^{−λD}] = (Φ(1) − λ)/(Φ(1)(1 − Ψ(λ))).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::laplace;
use crate::levy::LevyModel;
use crate::scale::{clamp_roundoff, ScaleEvaluator};

/// Number of nodes in the inverse-CDF table.
pub const TABLE_NODES: usize = 4096;
/// Tail mass left beyond the last table node.
const TABLE_TAIL: f64 = 1e-9;
const TABLE_Z_MIN: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct WindowLaw {
    model: LevyModel,
    scale: ScaleEvaluator,
    phi1: f64,
    atom0: f64,
    table: TailTable,
}

/// P(D > z) on log-spaced nodes; nonincreasing.
#[derive(Clone, Debug)]
struct TailTable {
    z: Vec<f64>,
    tail: Vec<f64>,
    /// Pareto exponent when D is heavy tailed, else exponential rate.
    beyond: TailShape,
}

#[derive(Clone, Copy, Debug)]
enum TailShape {
    Pareto(f64),
    Exponential(f64),
}

impl WindowLaw {
    pub fn new(model: LevyModel) -> Result<Self> {
        let scale = ScaleEvaluator::auto(model, 1.0)?;
        let phi1 = scale.phi().phi;
        let atom0 = scale.at_zero() / phi1;
        let mut law = WindowLaw {
            model,
            scale,
            phi1,
            atom0,
            table: TailTable {
                z: vec![],
                tail: vec![],
                beyond: TailShape::Exponential(phi1),
            },
        };
        law.table = law.build_table()?;
        Ok(law)
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    /// Φ(1).
    pub fn phi1(&self) -> f64 {
        self.phi1
    }

    /// Evaluator of W^(1).
    pub fn scale(&self) -> &ScaleEvaluator {
        &self.scale
    }

    /// True when D has an atom at zero; such models are reported with
    /// reduced confidence.
    pub fn reduced_confidence(&self) -> bool {
        self.atom0 > 0.0
    }

    /// P(S_e ≥ x) = e^{−Φ(1)x}.
    pub fn sup_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-self.phi1 * x).exp()
        }
    }

    /// P(D = 0).
    pub fn atom0(&self) -> f64 {
        self.atom0
    }

    /// Density of D at z > 0.
    pub fn d_density(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::Domain(format!("f_D needs z > 0, got {z}")));
        }
        let v = self.scale.remainder(z)?;
        let dv = self.scale.remainder_prime(z)?;
        Ok(clamp_roundoff(v - dv / self.phi1).max(0.0))
    }

    /// E[e^{−λD}] for Re λ > 0, including the atom.
    pub fn d_transform(&self, lam: Complex64) -> Complex64 {
        let phi = self.phi1;
        (phi - lam) / (phi * (1.0 - self.model.psi_slit(lam)))
    }

    /// P(D > z) by contour inversion of (1 − E[e^{−λD}])/λ.
    pub fn d_tail(&self, z: f64) -> Result<f64> {
        if z < 0.0 {
            return Ok(1.0);
        }
        if z == 0.0 {
            return Ok(1.0 - self.atom0);
        }
        let phi = self.phi1;
        let raw = move |lam: Complex64| (1.0 - self.d_transform(lam)) / lam;
        // Removable singularity at Φ(1): use the mean over a small circle.
        let radius = (0.05 * phi.max(1.0)).min(0.5 * phi);
        let f = move |lam: Complex64| {
            if (lam - phi).norm() < radius {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..8 {
                    let ang = std::f64::consts::FRAC_PI_8 + k as f64 * std::f64::consts::FRAC_PI_4;
                    acc += raw(lam + Complex64::from_polar(radius, ang));
                }
                acc / 8.0
            } else {
                raw(lam)
            }
        };
        // Tails below 1e-6 are accurate to ~1e-12 absolute, not relative.
        let v = laplace::invert_checked(&f, z, laplace::DEFAULT_NODES, 1e-6)?;
        Ok(v.clamp(0.0, 1.0))
    }

    /// P(D > z) from the inverse-CDF table (log-log interpolation), with the
    /// tail model beyond the last node.
    pub fn d_tail_tabulated(&self, z: f64) -> f64 {
        let t = &self.table;
        if z <= 0.0 {
            return if z < 0.0 { 1.0 } else { 1.0 - self.atom0 };
        }
        let n = t.z.len();
        if z <= t.z[0] {
            let p0 = 1.0 - self.atom0;
            return p0 + (t.tail[0] - p0) * z / t.z[0];
        }
        if z >= t.z[n - 1] {
            return t.tail[n - 1] * t.beyond.survival_ratio(t.z[n - 1], z);
        }
        let k = t.z.partition_point(|&x| x <= z) - 1;
        interp_log(t.z[k], t.z[k + 1], t.tail[k], t.tail[k + 1], z)
    }

    fn build_table(&self) -> Result<TailTable> {
        // Upper end: double until the tail falls under TABLE_TAIL.
        let mut z_hi = 8.0 / self.phi1;
        let mut guard = 0;
        while self.d_tail(z_hi)? > TABLE_TAIL {
            z_hi *= 2.0;
            guard += 1;
            if guard > 80 {
                return Err(Error::Domain("D tail does not reach 1e-9".into()));
            }
        }
        let (la, lb) = (TABLE_Z_MIN.ln(), z_hi.ln());
        let mut z = Vec::with_capacity(TABLE_NODES);
        let mut tail = Vec::with_capacity(TABLE_NODES);
        let mut prev = 1.0 - self.atom0;
        for k in 0..TABLE_NODES {
            let zk = (la + (lb - la) * k as f64 / (TABLE_NODES - 1) as f64).exp();
            // Monotone projection guards against inversion round-off.
            let v = self.d_tail(zk)?.min(prev);
            z.push(zk);
            tail.push(v);
            prev = v;
        }
        let beyond = match self.model.heavy_tail_index() {
            Some(alpha) => TailShape::Pareto(alpha),
            None => {
                let n = TABLE_NODES;
                let (t1, t2) = (tail[n - 2].max(1e-300), tail[n - 1].max(1e-300));
                let rate = (t1 / t2).ln() / (z[n - 1] - z[n - 2]);
                TailShape::Exponential(if rate.is_finite() && rate > 0.0 { rate } else { self.phi1 })
            }
        };
        Ok(TailTable { z, tail, beyond })
    }

    /// Draws D.
    pub fn sample_d<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile_tail(u)
    }

    /// The z with P(D > z) = τ, for τ ∈ (0, 1].
    pub fn quantile_tail(&self, tau: f64) -> f64 {
        let t = &self.table;
        let p0 = 1.0 - self.atom0;
        if tau >= p0 {
            return 0.0;
        }
        let n = t.z.len();
        if tau >= t.tail[0] {
            return t.z[0] * (p0 - tau) / (p0 - t.tail[0]);
        }
        if tau < t.tail[n - 1] {
            return t.beyond.quantile(t.z[n - 1], tau / t.tail[n - 1]);
        }
        // tail is nonincreasing: first index whose value is < tau.
        let k = t.tail.partition_point(|&v| v >= tau);
        let (a, b) = (k - 1, k);
        if t.tail[a] == t.tail[b] {
            return t.z[a];
        }
        let frac = (t.tail[a].ln() - tau.ln()) / (t.tail[a].ln() - t.tail[b].ln());
        (t.z[a].ln() + frac * (t.z[b].ln() - t.z[a].ln())).exp()
    }

    /// Draws (S_e, L_e) with L_e = S_e − D.
    pub fn sample_window<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let s = Exp::new(self.phi1).expect("positive rate").sample(rng);
        let d = self.sample_d(rng);
        (s, s - d)
    }
}

impl TailShape {
    /// P(D > z)/P(D > z0) for z ≥ z0.
    fn survival_ratio(&self, z0: f64, z: f64) -> f64 {
        match *self {
            TailShape::Pareto(a) => (z0 / z).powf(a),
            TailShape::Exponential(r) => (-r * (z - z0)).exp(),
        }
    }

    /// The z ≥ z0 whose survival ratio is `ratio` ∈ (0, 1].
    fn quantile(&self, z0: f64, ratio: f64) -> f64 {
        match *self {
            TailShape::Pareto(a) => z0 * ratio.powf(-1.0 / a),
            TailShape::Exponential(r) => z0 - ratio.ln() / r,
        }
    }
}

fn interp_log(z0: f64, z1: f64, t0: f64, t1: f64, z: f64) -> f64 {
    if t0 <= 0.0 || t1 <= 0.0 {
        return t0 + (t1 - t0) * (z - z0) / (z1 - z0);
    }
    let w = (z.ln() - z0.ln()) / (z1.ln() - z0.ln());
    (t0.ln() + w * (t1.ln() - t0.ln())).exp()
}
