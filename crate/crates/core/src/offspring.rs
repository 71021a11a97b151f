//! Finite-support reproduction laws.
//!
//! Besides the generating function F this module evaluates
//! φ(v) = 1 − F(1 − v), the quantity that enters the survival equations, in
//! the split φ(v) = m1·v − σ²v²/2 + R(v) with an exactly computed cubic
//! remainder R.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

/// Largest supported number of children.
pub const MAX_CHILDREN: usize = 64;
const SUM_TOL: f64 = 1e-12;
const CRITICAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Critical,
    Subcritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OffspringLaw {
    probs: Vec<f64>,
    m1: f64,
    m2: f64,
    m3: f64,
}

impl TryFrom<Vec<f64>> for OffspringLaw {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        OffspringLaw::new(probs)
    }
}

impl From<OffspringLaw> for Vec<f64> {
    fn from(law: OffspringLaw) -> Self {
        law.probs
    }
}

impl OffspringLaw {
    /// `probs[n]` is the probability of n children.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        if probs.is_empty() {
            return Err(Error::InvalidOffspring("empty law".into()));
        }
        if probs.len() > MAX_CHILDREN + 1 {
            return Err(Error::InvalidOffspring(format!(
                "support exceeds {MAX_CHILDREN} children"
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidOffspring(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidOffspring(format!(
                "probabilities sum to {total}, must sum to 1"
            )));
        }
        if probs.get(1) == Some(&1.0) {
            return Err(Error::InvalidOffspring("p1 = 1 is trivial".into()));
        }
        let moment = |k: i32| -> f64 {
            probs
                .iter()
                .enumerate()
                .map(|(n, p)| p * (n as f64).powi(k))
                .sum()
        };
        let (m1, m2, m3) = (moment(1), moment(2), moment(3));
        if m1 > 1.0 + CRITICAL_TOL {
            return Err(Error::InvalidOffspring(format!(
                "mean {m1} > 1: supercritical laws are not supported"
            )));
        }
        Ok(OffspringLaw { probs, m1, m2, m3 })
    }

    /// Binary branching: 0 or 2 children with equal probability.
    pub fn critical_binary() -> Self {
        OffspringLaw::new(vec![0.5, 0.0, 0.5]).expect("valid law")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_children(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn m3(&self) -> f64 {
        self.m3
    }

    /// E[p² − p].
    pub fn sigma2(&self) -> f64 {
        self.m2 - self.m1
    }

    pub fn classify(&self) -> Criticality {
        if (self.m1 - 1.0).abs() <= CRITICAL_TOL {
            Criticality::Critical
        } else {
            Criticality::Subcritical
        }
    }

    pub fn is_critical(&self) -> bool {
        self.classify() == Criticality::Critical
    }

    /// F(s) = Σ pₙ sⁿ.
    pub fn pgf(&self, s: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    /// φ(v) = 1 − F(1 − v), accurate for small v.
    pub fn phi_fn(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let l = (-v).ln_1p();
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, p)| -p * (n as f64 * l).exp_m1())
            .sum()
    }

    /// φ′(v) = F′(1 − v).
    pub fn phi_fn_prime(&self, v: f64) -> f64 {
        let s = 1.0 - v;
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, p)| p * n as f64 * s.powi(n as i32 - 1))
            .sum()
    }

    /// R(u) = u³ Σ_{n≥3} pₙ n(n−1)(n−2)/2 ∫₀¹ (1 − ut)^{n−3}(1 − t)² dt.
    pub fn remainder_r(&self, u: f64) -> f64 {
        if u == 0.0 || self.probs.len() < 4 {
            return 0.0;
        }
        // Integrands are polynomials of degree ≤ N − 1 ≤ 63: exact with 32 nodes.
        let g = gauss32();
        let mut total = 0.0;
        for (n, p) in self.probs.iter().enumerate().skip(3) {
            if *p == 0.0 {
                continue;
            }
            let nf = n as f64;
            let inner = g.integrate(0.0, 1.0, |t| (1.0 - u * t).powi(n as i32 - 3) * (1.0 - t).powi(2));
            total += p * nf * (nf - 1.0) * (nf - 2.0) / 2.0 * inner;
        }
        u * u * u * total
    }
}

fn gauss32() -> &'static GaussLegendre {
    static R: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(32))
}
