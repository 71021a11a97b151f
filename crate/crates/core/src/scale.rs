//! Scale functions W^(q), their derivatives and the q-potential density.
//!
//! W^(q) is the function on [0, ∞) whose Laplace transform is
//! 1/(Ψ(β) − q) for β > Φ(q). Closed forms are used where the catalog has
//! them; otherwise the transform is inverted on a parabolic contour after
//! shifting the abscissa by Φ(q), so that the inverted function stays
//! bounded and the exponential growth is restored exactly.
//!
//! Besides W^(q) the evaluator exposes the remainder
//! V^(q)(x) = e^{Φ(q)x}/Ψ′(Φ(q)) − W^(q)(x), which is what the q-potential
//! density equals on the negative half-line. Computing it directly avoids
//! the cancellation that the difference of two exponentially large numbers
//! would suffer.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::laplace;
use crate::levy::{LevyModel, PhiSolution, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ClosedForm,
    ContourInversion,
}

/// W(x) = linear·x + Σ coef_i e^{root_i x}.
#[derive(Clone, Debug)]
struct ExpSum {
    linear: f64,
    roots: Vec<f64>,
    coefs: Vec<f64>,
    /// Index of the root equal to Φ(q), if any.
    phi_index: Option<usize>,
}

impl ExpSum {
    fn value(&self, x: f64) -> f64 {
        self.linear * x
            + self
                .roots
                .iter()
                .zip(&self.coefs)
                .map(|(r, c)| c * (r * x).exp())
                .sum::<f64>()
    }

    fn derivative(&self, x: f64) -> f64 {
        self.linear
            + self
                .roots
                .iter()
                .zip(&self.coefs)
                .map(|(r, c)| c * r * (r * x).exp())
                .sum::<f64>()
    }

    /// Σ over roots other than Φ, negated: the remainder V and its derivative.
    fn remainder(&self, x: f64, derivative: bool) -> f64 {
        let mut v = -if derivative { self.linear } else { self.linear * x };
        for (i, (r, c)) in self.roots.iter().zip(&self.coefs).enumerate() {
            if Some(i) == self.phi_index {
                continue;
            }
            let d = if derivative { *r } else { 1.0 };
            v -= c * d * (r * x).exp();
        }
        v
    }
}

#[derive(Clone, Debug)]
enum Closed {
    Exp(ExpSum),
    /// W = (1/c) Σ (q/c)^k x^{α(k+1)−1} / Γ(α(k+1)).
    Stable { alpha: f64, c: f64 },
}

/// Evaluates W^(q), W^(q)′ and the remainder V^(q) for one (model, q).
#[derive(Clone, Debug)]
pub struct ScaleEvaluator {
    model: LevyModel,
    q: f64,
    backend: Backend,
    nodes: usize,
    phi: PhiSolution,
    closed: Option<Closed>,
}

/// Terms of the Mittag-Leffler-type series are dropped below this fraction
/// of the partial sum.
const SERIES_TOL: f64 = 1e-16;
/// Above this value of (q/c)x^α only the dominant exponential is kept.
const SERIES_SWITCH: f64 = 50.0;
/// Contour values of V below this are checked for absolute, not relative,
/// consistency.
const REMAINDER_FLOOR: f64 = 1e-6;

impl ScaleEvaluator {
    pub fn new(model: LevyModel, q: f64, backend: Backend) -> Result<Self> {
        Self::with_nodes(model, q, backend, laplace::DEFAULT_NODES)
    }

    /// Closed form when the catalog has one, contour inversion otherwise.
    pub fn auto(model: LevyModel, q: f64) -> Result<Self> {
        match Self::new(model, q, Backend::ClosedForm) {
            Err(Error::NoClosedForm(_)) => Self::new(model, q, Backend::ContourInversion),
            other => other,
        }
    }

    pub fn with_nodes(model: LevyModel, q: f64, backend: Backend, nodes: usize) -> Result<Self> {
        if !(q >= 0.0) {
            return Err(Error::Domain(format!("q = {q} must be >= 0")));
        }
        if nodes < 8 {
            return Err(Error::InvalidParameter("at least 8 contour nodes".into()));
        }
        let phi = model.phi(q)?;
        let closed = match backend {
            Backend::ClosedForm => Some(closed_form(&model, q, &phi)?),
            Backend::ContourInversion => None,
        };
        Ok(ScaleEvaluator {
            model,
            q,
            backend,
            nodes,
            phi,
            closed,
        })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn phi(&self) -> &PhiSolution {
        &self.phi
    }

    /// W^(q)(0⁺).
    pub fn at_zero(&self) -> f64 {
        self.model.scale_at_zero()
    }

    /// W^(q)(x); zero for x < 0.
    pub fn w(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if x == 0.0 {
            return Ok(self.at_zero());
        }
        match &self.closed {
            Some(Closed::Exp(e)) => Ok(e.value(x)),
            Some(Closed::Stable { alpha, c }) => Ok(self.stable_series(*alpha, *c, x, false)),
            None => self.contour_w(x, false),
        }
    }

    /// W^(q)′(x) for x > 0.
    pub fn w_prime(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("W′ needs x > 0, got {x}")));
        }
        match &self.closed {
            Some(Closed::Exp(e)) => Ok(e.derivative(x)),
            Some(Closed::Stable { alpha, c }) => Ok(self.stable_series(*alpha, *c, x, true)),
            None => self.contour_w(x, true),
        }
    }

    fn psi_prime_at_phi(&self) -> Result<f64> {
        let d = self.phi.psi_prime_at_phi;
        if d <= 0.0 {
            return Err(Error::Degenerate(format!(
                "Ψ′(Φ({})) = {d}: no exponential leading term",
                self.q
            )));
        }
        Ok(d)
    }

    /// V^(q)(x) = e^{Φ(q)x}/Ψ′(Φ(q)) − W^(q)(x), for x ≥ 0.
    pub fn remainder(&self, x: f64) -> Result<f64> {
        self.remainder_impl(x, false)
    }

    /// Derivative of [`remainder`](Self::remainder), for x > 0.
    pub fn remainder_prime(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("V′ needs x > 0, got {x}")));
        }
        self.remainder_impl(x, true)
    }

    fn remainder_impl(&self, x: f64, derivative: bool) -> Result<f64> {
        let d = self.psi_prime_at_phi()?;
        if x < 0.0 {
            return Err(Error::Domain(format!("remainder needs x >= 0, got {x}")));
        }
        if x == 0.0 && !derivative {
            return Ok(1.0 / d - self.at_zero());
        }
        if let Some(Closed::Exp(e)) = &self.closed {
            return Ok(e.remainder(x, derivative));
        }
        // Stable series cancel badly here; the contour route is used for
        // every model without an exponential-sum closed form.
        self.contour_remainder(x, derivative, d)
    }

    fn stable_series(&self, alpha: f64, c: f64, x: f64, derivative: bool) -> f64 {
        let ratio = self.q / c;
        let z = ratio * x.powf(alpha);
        if z > SERIES_SWITCH {
            let phi = self.phi.phi;
            let lead = (phi * x).exp() / self.phi.psi_prime_at_phi;
            return if derivative { phi * lead } else { lead };
        }
        let lx = x.ln();
        let shift = if derivative { 2.0 } else { 1.0 };
        let mut sum = 0.0;
        let mut k = 0usize;
        let mut prev = f64::INFINITY;
        loop {
            let kf = k as f64;
            let order = alpha * (kf + 1.0);
            let log_pow = if k == 0 { 0.0 } else { kf * ratio.ln() };
            let term = (log_pow + (order - shift) * lx - ln_gamma(order - shift + 1.0)).exp();
            sum += term;
            if ratio == 0.0 {
                break;
            }
            if term < SERIES_TOL * sum && term <= prev {
                break;
            }
            prev = term;
            k += 1;
            if k > 10_000 {
                break;
            }
        }
        sum / c
    }

    fn contour_w(&self, x: f64, derivative: bool) -> Result<f64> {
        let model = self.model;
        let q = self.q;
        let sigma = self.phi.phi;
        let w0 = self.at_zero();
        let value = if derivative {
            let f = move |s: Complex64| {
                let b = s + sigma;
                b / (model.psi_slit(b) - q) - w0
            };
            laplace::invert_checked(&f, x, self.nodes, 1e-300)?
        } else {
            let f = move |s: Complex64| {
                let b = s + sigma;
                1.0 / (model.psi_slit(b) - q)
            };
            laplace::invert_checked(&f, x, self.nodes, 1e-300)?
        };
        Ok((sigma * x).exp() * value)
    }

    fn contour_remainder(&self, x: f64, derivative: bool, psi_phi: f64) -> Result<f64> {
        let model = self.model;
        let q = self.q;
        let phi = self.phi.phi;
        let v0 = 1.0 / psi_phi - self.at_zero();
        let raw = move |b: Complex64| -> Complex64 {
            let r = 1.0 / ((b - phi) * psi_phi) - 1.0 / (model.psi_slit(b) - q);
            if derivative {
                b * r - v0
            } else {
                r
            }
        };
        // The transform has a removable singularity at Φ; near it, replace
        // the value by its mean over a small circle.
        let radius = if phi > 0.0 {
            (0.05 * phi.max(1.0)).min(0.5 * phi)
        } else {
            0.0
        };
        let f = move |b: Complex64| -> Complex64 {
            if radius > 0.0 && (b - phi).norm() < radius {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..8 {
                    let ang = std::f64::consts::FRAC_PI_8 + k as f64 * std::f64::consts::FRAC_PI_4;
                    acc += raw(b + Complex64::from_polar(radius, ang));
                }
                acc / 8.0
            } else {
                raw(b)
            }
        };
        // V decays; far out only absolute accuracy is meaningful.
        laplace::invert_checked(&f, x, self.nodes, REMAINDER_FLOOR)
    }

    /// max over x ∈ [10, 40] of |W^(q)(x) Ψ′(Φ(q)) e^{−Φ(q)x} − 1|.
    pub fn asymptote_check(&self) -> Result<f64> {
        let d = self.psi_prime_at_phi()?;
        if self.phi.phi <= 0.0 {
            return Err(Error::Degenerate(
                "Φ(q) = 0: W has no exponential growth".into(),
            ));
        }
        let mut worst: f64 = 0.0;
        for i in 0..=60 {
            let x = 10.0 + 0.5 * i as f64;
            // W e^{−Φx} Ψ′ − 1 = −V e^{−Φx} Ψ′.
            let v = self.remainder(x)?;
            worst = worst.max((v * (-self.phi.phi * x).exp() * d).abs());
        }
        Ok(worst)
    }
}

fn closed_form(model: &LevyModel, q: f64, phi: &PhiSolution) -> Result<Closed> {
    match model.variant() {
        Variant::SnStable { alpha, c } => Ok(Closed::Stable { alpha, c }),
        Variant::StableWithDrift { .. } => Err(Error::NoClosedForm(
            "StableWithDrift scale functions need contour inversion".into(),
        )),
        Variant::BrownianDrift { a, eta } => {
            let e2 = eta * eta;
            let disc = a * a + 2.0 * e2 * q;
            if disc == 0.0 {
                return Ok(Closed::Exp(ExpSum {
                    linear: 2.0 / e2,
                    roots: vec![],
                    coefs: vec![],
                    phi_index: None,
                }));
            }
            let sq = disc.sqrt();
            let r_hi = phi.phi;
            let r_lo = (-a - sq) / e2;
            let c = 1.0 / (e2 * r_hi + a);
            Ok(Closed::Exp(ExpSum {
                linear: 0.0,
                roots: vec![r_hi, r_lo],
                coefs: vec![c, -c],
                phi_index: Some(0),
            }))
        }
        Variant::BrownianExpJumps { a, eta, rho, mu } => {
            exp_jump_partial_fractions(a, eta, rho, mu, q, phi.phi)
        }
    }
}

/// Partial fractions of (μ+β)/D(β), D(β) = (μ+β)(aβ + η²β²/2 − q) − ρβ.
fn exp_jump_partial_fractions(a: f64, eta: f64, rho: f64, mu: f64, q: f64, phi: f64) -> Result<Closed> {
    let h = 0.5 * eta * eta;
    // D = c3 β³ + c2 β² + c1 β − qμ
    let c3 = h;
    let c2 = a + mu * h;
    let c1 = a * mu - q - rho;
    let dprime = |b: f64| 3.0 * c3 * b * b + 2.0 * c2 * b + c1;
    let mut roots = vec![phi];
    // Deflate by (β − Φ).
    let (qa, qb, qc) = if c3 != 0.0 {
        let b2 = c3;
        let b1 = c2 + phi * b2;
        let b0 = c1 + phi * b1;
        (b2, b1, b0)
    } else {
        (0.0, c2, c1 + phi * c2)
    };
    if qa != 0.0 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return Err(Error::NoClosedForm("complex partial-fraction roots".into()));
        }
        let s = disc.sqrt();
        let t = -0.5 * (qb + qb.signum() * s);
        roots.push(t / qa);
        roots.push(if t != 0.0 { qc / t } else { 0.0 });
    } else {
        roots.push(-qc / qb);
    }
    for i in 0..roots.len() {
        for j in 0..i {
            if (roots[i] - roots[j]).abs() < 1e-7 * (1.0 + roots[i].abs()) {
                return Err(Error::NoClosedForm(
                    "repeated root in the exponential-jump partial fractions".into(),
                ));
            }
        }
    }
    let coefs = roots.iter().map(|&r| (mu + r) / dprime(r)).collect();
    Ok(Closed::Exp(ExpSum {
        linear: 0.0,
        roots,
        coefs,
        phi_index: Some(0),
    }))
}

/// The q-potential density θ^(q)(z) = Φ′(q)e^{−Φ(q)z} − W^(q)(−z).
#[derive(Clone, Debug)]
pub struct PotentialDensity {
    scale: ScaleEvaluator,
    phi_prime: f64,
}

impl PotentialDensity {
    /// q > 0, or q = 0 for a process drifting to −∞ (the 0-potential).
    pub fn new(model: LevyModel, q: f64) -> Result<Self> {
        Self::from_evaluator(ScaleEvaluator::auto(model, q)?)
    }

    pub fn from_evaluator(scale: ScaleEvaluator) -> Result<Self> {
        let phi_prime = scale.phi().phi_prime()?;
        if scale.q() == 0.0 && scale.phi().phi == 0.0 {
            return Err(Error::Degenerate(
                "0-potential density is infinite unless the process drifts to −∞".into(),
            ));
        }
        Ok(PotentialDensity { scale, phi_prime })
    }

    pub fn scale(&self) -> &ScaleEvaluator {
        &self.scale
    }

    pub fn q(&self) -> f64 {
        self.scale.q()
    }

    pub fn theta(&self, z: f64) -> Result<f64> {
        let v = if z >= 0.0 {
            self.phi_prime * (-self.scale.phi().phi * z).exp()
        } else {
            self.scale.remainder(-z)?
        };
        Ok(clamp_roundoff(v))
    }
}

pub(crate) fn clamp_roundoff(v: f64) -> f64 {
    if (-1e-12..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}
