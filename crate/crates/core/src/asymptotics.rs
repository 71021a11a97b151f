//! Predicted tail behaviour of u(x) per regime, and fits that measure the
//! same quantities on computed or simulated curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::levy::{DriftRegime, LevyModel, Variant};
use crate::offspring::{Criticality, OffspringLaw};
use crate::sim::{increment, path_rng};

/// Minimum number of points a fit accepts.
pub const MIN_FIT_POINTS: usize = 8;
/// A γ band wider than this is inconsistent with polynomial decay.
pub const BAND_MISMATCH_RATIO: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    CritDriftUp,
    CritOscillating,
    CritDriftDown,
}

/// Shape of the predicted tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailLaw {
    /// u(x) ≍ e^{−rate·x}.
    Exponential { rate: f64 },
    /// x·u(x) → limit.
    InverseLinear { limit: f64 },
    /// u(x) ≍ 1/(xW(x)). When Ψ(λ) ~ ℓλ^α at 0 with constant ℓ, γ = xW(x)u(x)
    /// approaches `gamma_constant` along a sequence, equivalently
    /// x^α u(x) approaches `sequence_constant`.
    ScaleEnvelope {
        alpha: Option<f64>,
        ell: Option<f64>,
        sequence_constant: Option<f64>,
        gamma_constant: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimePrediction {
    pub regime: Regime,
    pub law: TailLaw,
    /// Closed form the prediction evaluates.
    pub formula: &'static str,
}

impl RegimePrediction {
    /// Exponential rate, when the tail is exponential.
    pub fn rate(&self) -> Option<f64> {
        match self.law {
            TailLaw::Exponential { rate } => Some(rate),
            _ => None,
        }
    }
}

/// Index α and constant ℓ with Ψ(λ) ~ ℓλ^α as λ → 0, for oscillating
/// models. `None` when Ψ has a non-zero linear term.
pub fn small_lambda_index(model: &LevyModel) -> Option<(f64, f64)> {
    if model.regime() != DriftRegime::Oscillating {
        return None;
    }
    match model.variant() {
        Variant::BrownianDrift { eta, .. } => Some((2.0, 0.5 * eta * eta)),
        Variant::SnStable { alpha, c } | Variant::StableWithDrift { alpha, c, .. } => Some((alpha, c)),
        Variant::BrownianExpJumps { eta, rho, mu, .. } => Some((2.0, 0.5 * eta * eta + rho / (mu * mu))),
    }
}

/// 2/(σ²B(α,α)), the constant of the fixed point f(x) = x^α/(c+κx)^α.
pub fn gamma_constant(alpha: f64, sigma2: f64) -> f64 {
    let ln_b = 2.0 * ln_gamma(alpha) - ln_gamma(2.0 * alpha);
    2.0 / (sigma2 * ln_b.exp())
}

pub fn predict(model: &LevyModel, law: &OffspringLaw) -> Result<RegimePrediction> {
    if law.m1() > 1.0 + 1e-12 {
        return Err(Error::InvalidOffspring(format!("mean {} > 1 is supercritical", law.m1())));
    }
    if law.classify() == Criticality::Subcritical {
        let rate = model.phi(1.0 - law.m1())?.phi;
        return Ok(RegimePrediction {
            regime: Regime::Subcritical,
            law: TailLaw::Exponential { rate },
            formula: "u(x) ≍ exp(−Φ(1 − E[p]) x)",
        });
    }
    let sigma2 = law.sigma2();
    Ok(match model.regime() {
        DriftRegime::DriftUp => RegimePrediction {
            regime: Regime::CritDriftUp,
            law: TailLaw::InverseLinear {
                limit: 2.0 * model.mean_drift() / sigma2,
            },
            formula: "x u(x) → 2Ψ′(0+)/σ²",
        },
        DriftRegime::DriftDown => RegimePrediction {
            regime: Regime::CritDriftDown,
            law: TailLaw::Exponential {
                rate: model.phi(0.0)?.phi,
            },
            formula: "u(x) ≍ exp(−Φ(0) x)",
        },
        DriftRegime::Oscillating => {
            let idx = small_lambda_index(model);
            let (alpha, ell) = (idx.map(|p| p.0), idx.map(|p| p.1));
            let sequence_constant = idx.map(|(a, l)| 2.0 * gamma(2.0 * a) * l / (sigma2 * gamma(a)));
            RegimePrediction {
                regime: Regime::CritOscillating,
                law: TailLaw::ScaleEnvelope {
                    alpha,
                    ell,
                    sequence_constant,
                    gamma_constant: alpha.map(|a| gamma_constant(a, sigma2)),
                },
                formula: "u(x) ≍ 1/(x W(x)); x^α u(x) → 2Γ(2α)ℓ/(σ²Γ(α)) along a sequence",
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub stderr: f64,
    pub n: usize,
}

fn in_window(points: &[(f64, f64)], window: (f64, f64)) -> impl Iterator<Item = (f64, f64)> + '_ {
    points
        .iter()
        .copied()
        .filter(move |&(x, u)| x >= window.0 && x <= window.1 && u > 0.0 && u.is_finite())
}

/// Least-squares slope of ln u against x on the window, negated.
pub fn fit_exp_rate(points: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = in_window(points, window).map(|(x, u)| (x, u.ln())).collect();
    let n = pts.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{n} positive points in [{}, {}], need {MIN_FIT_POINTS}",
            window.0, window.1
        )));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all points share one abscissa".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(RateFit {
        rate: -slope,
        stderr,
        n,
    })
}

/// Summary of γ_i = x_i W(x_i) u_i over a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// max/min.
    pub ratio: f64,
    pub n: usize,
    /// True when `ratio` exceeds [`BAND_MISMATCH_RATIO`].
    pub regime_mismatch: bool,
    pub gamma: Vec<(f64, f64)>,
}

impl PowerFit {
    /// Smallest relative distance |γ/target − 1| attained in the window.
    pub fn closest_approach(&self, target: f64) -> f64 {
        self.gamma
            .iter()
            .map(|&(_, g)| (g / target - 1.0).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn fit_power_product(
    points: &[(f64, f64)],
    weight: impl Fn(f64) -> Result<f64>,
    window: (f64, f64),
) -> Result<PowerFit> {
    let gamma: Vec<(f64, f64)> = in_window(points, window)
        .map(|(x, u)| Ok((x, x * weight(x)? * u)))
        .collect::<Result<_>>()?;
    let n = gamma.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{n} positive points in [{}, {}], need {MIN_FIT_POINTS}",
            window.0, window.1
        )));
    }
    let mut sorted: Vec<f64> = gamma.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let (min, max) = (sorted[0], sorted[n - 1]);
    let ratio = max / min;
    Ok(PowerFit {
        median,
        min,
        max,
        ratio,
        n,
        regime_mismatch: !(ratio <= BAND_MISMATCH_RATIO),
        gamma,
    })
}

/// Monte Carlo estimate of (1/t)∫₀ᵗ P(L_s ≥ 0) ds from `n_paths` paths
/// observed at the grid points s = t/steps, 2t/steps, …, t.
pub fn spitzer_fraction(model: &LevyModel, t: f64, steps: usize, n_paths: u64, seed: u64) -> Result<f64> {
    if !(t > 0.0) || steps == 0 || n_paths == 0 {
        return Err(Error::InvalidParameter(format!(
            "need t > 0, steps ≥ 1 and paths ≥ 1 (got {t}, {steps}, {n_paths})"
        )));
    }
    let dt = t / steps as f64;
    let hits: u64 = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut x = 0.0;
            let mut k = 0u64;
            for _ in 0..steps {
                x += increment(model, dt, &mut rng);
                k += u64::from(x >= 0.0);
            }
            k
        })
        .sum();
    Ok(hits as f64 / (n_paths as f64 * steps as f64))
}
