//! Catalog of spectrally negative Laplace exponents.
//!
//! Every model is a closed-form Ψ(λ) = log E[exp(λ L_1)] for a Lévy process
//! with no positive jumps. The catalog covers the three long-run regimes
//! (drift up, oscillation, drift down) and both bounded and unbounded
//! variation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of one catalog member.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum Variant {
    /// Ψ(λ) = aλ + η²λ²/2.
    BrownianDrift { a: f64, eta: f64 },
    /// Ψ(λ) = c λ^α.
    #[serde(rename = "SNStable")]
    SnStable { alpha: f64, c: f64 },
    /// Ψ(λ) = aλ + η²λ²/2 − ρλ/(μ+λ); jumps are −Exp(μ) at rate ρ.
    BrownianExpJumps { a: f64, eta: f64, rho: f64, mu: f64 },
    /// Ψ(λ) = aλ + c λ^α.
    StableWithDrift { a: f64, alpha: f64, c: f64 },
}

/// Long-run behaviour of the process, read off the sign of Ψ′(0⁺).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftRegime {
    DriftUp,
    Oscillating,
    DriftDown,
}

/// A validated spectrally negative Laplace exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Variant", into = "Variant")]
pub struct LevyModel {
    variant: Variant,
}

impl TryFrom<Variant> for LevyModel {
    type Error = Error;
    fn try_from(v: Variant) -> Result<Self> {
        LevyModel::new(v)
    }
}

impl From<LevyModel> for Variant {
    fn from(m: LevyModel) -> Variant {
        m.variant
    }
}

/// Result of solving Ψ(λ) = q for its largest root.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiSolution {
    pub q: f64,
    pub phi: f64,
    pub psi_prime_at_phi: f64,
    pub bracket: (f64, f64),
}

impl PhiSolution {
    /// Φ′(q) = 1/Ψ′(Φ(q)).
    pub fn phi_prime(&self) -> Result<f64> {
        if self.psi_prime_at_phi <= 0.0 {
            return Err(Error::Degenerate(format!(
                "Ψ′(Φ({})) = {} so Φ′ is infinite",
                self.q, self.psi_prime_at_phi
            )));
        }
        Ok(1.0 / self.psi_prime_at_phi)
    }
}

/// Absolute tolerance on λ for the root finder.
const ROOT_TOL: f64 = 1e-12;
const DRIFT_ZERO_TOL: f64 = 1e-12;

fn check_stable(alpha: f64, c: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::InvalidModel(format!("alpha = {alpha} must lie in (1, 2]")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidModel(format!("stable scale c = {c} must be positive")));
    }
    Ok(())
}

impl LevyModel {
    pub fn new(variant: Variant) -> Result<Self> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidModel(format!("{name} must be finite")))
            }
        };
        match variant {
            Variant::BrownianDrift { a, eta } => {
                finite("a", a)?;
                finite("eta", eta)?;
                if eta <= 0.0 {
                    return Err(Error::InvalidModel(
                        "BrownianDrift needs eta > 0 (otherwise Ψ is linear)".into(),
                    ));
                }
            }
            Variant::SnStable { alpha, c } => check_stable(alpha, c)?,
            Variant::StableWithDrift { a, alpha, c } => {
                finite("a", a)?;
                check_stable(alpha, c)?;
            }
            Variant::BrownianExpJumps { a, eta, rho, mu } => {
                for (n, v) in [("a", a), ("eta", eta), ("rho", rho), ("mu", mu)] {
                    finite(n, v)?;
                }
                if eta < 0.0 {
                    return Err(Error::InvalidModel("eta must be >= 0".into()));
                }
                if rho < 0.0 {
                    return Err(Error::InvalidModel("jump rate rho must be >= 0".into()));
                }
                if mu <= 0.0 {
                    return Err(Error::InvalidModel("jump parameter mu must be > 0".into()));
                }
                if eta == 0.0 && a <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "bounded-variation model needs a strictly positive drift (a = {a}); \
                         otherwise -L is a subordinator"
                    )));
                }
                if eta == 0.0 && rho == 0.0 {
                    return Err(Error::InvalidModel(
                        "pure drift has a linear exponent, not strictly convex".into(),
                    ));
                }
            }
        }
        let model = LevyModel { variant };
        let hi = model.psi(64.0);
        if !(hi > 1.0) {
            return Err(Error::InvalidModel(format!("Ψ(64) = {hi} does not grow")));
        }
        Ok(model)
    }

    pub fn brownian(a: f64, eta: f64) -> Result<Self> {
        Self::new(Variant::BrownianDrift { a, eta })
    }

    pub fn stable(alpha: f64, c: f64) -> Result<Self> {
        Self::new(Variant::SnStable { alpha, c })
    }

    pub fn brownian_exp_jumps(a: f64, eta: f64, rho: f64, mu: f64) -> Result<Self> {
        Self::new(Variant::BrownianExpJumps { a, eta, rho, mu })
    }

    pub fn stable_with_drift(a: f64, alpha: f64, c: f64) -> Result<Self> {
        Self::new(Variant::StableWithDrift { a, alpha, c })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            Variant::BrownianDrift { .. } => "BrownianDrift",
            Variant::SnStable { .. } => "SNStable",
            Variant::BrownianExpJumps { .. } => "BrownianExpJumps",
            Variant::StableWithDrift { .. } => "StableWithDrift",
        }
    }

    /// Ψ(λ) for real λ ≥ 0.
    pub fn psi(&self, lam: f64) -> f64 {
        match self.variant {
            Variant::BrownianDrift { a, eta } => a * lam + 0.5 * eta * eta * lam * lam,
            Variant::SnStable { alpha, c } => c * lam.powf(alpha),
            Variant::BrownianExpJumps { a, eta, rho, mu } => {
                a * lam + 0.5 * eta * eta * lam * lam - rho * lam / (mu + lam)
            }
            Variant::StableWithDrift { a, alpha, c } => a * lam + c * lam.powf(alpha),
        }
    }

    /// Ψ′(λ); at λ = 0 this is the right derivative Ψ′(0⁺).
    pub fn psi_prime(&self, lam: f64) -> f64 {
        let stable_part = |alpha: f64, c: f64| {
            if lam == 0.0 {
                0.0
            } else {
                c * alpha * lam.powf(alpha - 1.0)
            }
        };
        match self.variant {
            Variant::BrownianDrift { a, eta } => a + eta * eta * lam,
            Variant::SnStable { alpha, c } => stable_part(alpha, c),
            Variant::BrownianExpJumps { a, eta, rho, mu } => {
                a + eta * eta * lam - rho * mu / ((mu + lam) * (mu + lam))
            }
            Variant::StableWithDrift { a, alpha, c } => a + stable_part(alpha, c),
        }
    }

    /// Analytic continuation of Ψ to Re β > 0 (principal branch for β^α).
    pub fn psi_complex(&self, beta: Complex64) -> Result<Complex64> {
        if !(beta.re > 0.0) {
            return Err(Error::Domain(format!("Re(beta) = {} must be > 0", beta.re)));
        }
        Ok(self.psi_slit(beta))
    }

    /// Ψ on the plane slit along (−∞, 0]. Used by contour inversion, whose
    /// nodes leave the right half-plane.
    pub(crate) fn psi_slit(&self, beta: Complex64) -> Complex64 {
        match self.variant {
            Variant::BrownianDrift { a, eta } => beta * a + beta * beta * (0.5 * eta * eta),
            Variant::SnStable { alpha, c } => beta.powf(alpha) * c,
            Variant::BrownianExpJumps { a, eta, rho, mu } => {
                beta * a + beta * beta * (0.5 * eta * eta) - beta * rho / (beta + mu)
            }
            Variant::StableWithDrift { a, alpha, c } => beta * a + beta.powf(alpha) * c,
        }
    }

    /// Ψ′(0⁺), the mean of L_1.
    pub fn mean_drift(&self) -> f64 {
        self.psi_prime(0.0)
    }

    pub fn regime(&self) -> DriftRegime {
        let d = self.mean_drift();
        if d > DRIFT_ZERO_TOL {
            DriftRegime::DriftUp
        } else if d < -DRIFT_ZERO_TOL {
            DriftRegime::DriftDown
        } else {
            DriftRegime::Oscillating
        }
    }

    /// W(0) = lim Ψ(β)/β as β → ∞ inverted: 1/a for bounded variation, else 0.
    pub fn scale_at_zero(&self) -> f64 {
        match self.variant {
            Variant::BrownianExpJumps { a, eta: 0.0, .. } => 1.0 / a,
            _ => 0.0,
        }
    }

    /// Exponent of the regularly varying lower tail of L, when jumps are
    /// stable-like; `None` for exponentially light lower tails.
    pub fn heavy_tail_index(&self) -> Option<f64> {
        match self.variant {
            Variant::SnStable { alpha, .. } | Variant::StableWithDrift { alpha, .. }
                if alpha < 2.0 =>
            {
                Some(alpha)
            }
            _ => None,
        }
    }

    /// Minimizer of Ψ on [0, ∞), by bisection on the sign of Ψ′.
    pub fn argmin(&self) -> f64 {
        if self.psi_prime(0.0) >= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.psi_prime(hi) <= 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > ROOT_TOL * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.psi_prime(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Φ(q), the largest root of Ψ(λ) = q.
    pub fn phi(&self, q: f64) -> Result<PhiSolution> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::Domain(format!("q = {q} must be a finite nonnegative number")));
        }
        let lmin = self.argmin();
        if q == 0.0 && lmin == 0.0 {
            return Ok(PhiSolution {
                q,
                phi: 0.0,
                psi_prime_at_phi: self.psi_prime(0.0),
                bracket: (0.0, 0.0),
            });
        }
        let mut hi = lmin.max(1.0);
        while self.psi(hi) <= q + 1.0 {
            hi *= 2.0;
        }
        let bracket = (lmin, hi);
        let (mut lo, mut up) = bracket;
        let mut x = 0.5 * (lo + up);
        for _ in 0..400 {
            let f = self.psi(x) - q;
            if f > 0.0 {
                up = x;
            } else {
                lo = x;
            }
            if up - lo <= ROOT_TOL {
                break;
            }
            // Newton step, kept only when it stays inside the bracket.
            let d = self.psi_prime(x);
            let newton = if d > 0.0 { x - f / d } else { f64::NAN };
            x = if newton > lo && newton < up {
                newton
            } else {
                0.5 * (lo + up)
            };
            if (self.psi(x) - q).abs() <= 1e-15 * q.max(1.0) {
                lo = x;
                up = x;
                break;
            }
        }
        let mut phi = 0.5 * (lo + up);
        for _ in 0..3 {
            let d = self.psi_prime(phi);
            if d <= 0.0 {
                break;
            }
            let next = phi - (self.psi(phi) - q) / d;
            if next >= lmin && (next - phi).abs() < 1e-9 {
                phi = next;
            }
        }
        Ok(PhiSolution {
            q,
            phi,
            psi_prime_at_phi: self.psi_prime(phi),
            bracket,
        })
    }

    /// Φ′(q) = 1/Ψ′(Φ(q)).
    pub fn phi_prime(&self, q: f64) -> Result<f64> {
        self.phi(q)?.phi_prime()
    }
}
