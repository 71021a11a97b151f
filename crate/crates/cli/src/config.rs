//! Experiment configuration: one TOML file with a model block, an offspring
//! block and the parameters of the selected pipeline.

use serde::{Deserialize, Serialize};
use snbranch_core::offspring::OffspringLaw;
use snbranch_core::sim::{SimBackend, SimConfig};
use snbranch_core::solver::{Method, SolverConfig};
use snbranch_core::LevyModel;

use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Phi,
    Scale,
    Simulate,
    Solve,
    Asymptotics,
    Compare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    #[serde(default)]
    pub seed: u64,
    pub model: LevyModel,
    pub offspring: Option<OffspringBlock>,
    pub phi: Option<PhiParams>,
    pub scale: Option<ScaleParams>,
    pub simulate: Option<SimulateParams>,
    pub solve: Option<SolveParams>,
    pub asymptotics: Option<AsymptoticsParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffspringBlock {
    /// probs[n] is the probability of n children.
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiParams {
    pub q: Vec<f64>,
}

impl Default for PhiParams {
    fn default() -> Self {
        PhiParams {
            q: vec![0.0, 0.25, 0.5, 1.0, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleParams {
    pub q: f64,
    /// Grid covers [−x_max, x_max] without 0.
    pub x_max: f64,
    pub points: usize,
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams {
            q: 1.0,
            x_max: 10.0,
            points: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub levels: Vec<f64>,
    pub n_reps: u64,
    /// Default 15/Φ(1); a non-positive value disables killing.
    pub kill_barrier: Option<f64>,
    pub max_particles: Option<usize>,
    /// Euler step; the exact window sampler when absent.
    pub euler_dt: Option<f64>,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams {
            levels: vec![0.5, 1.0, 2.0, 3.0],
            n_reps: 10_000,
            kill_barrier: None,
            max_particles: None,
            euler_dt: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub x_max: Option<f64>,
    pub h: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Picard damping; Newton when absent.
    pub picard_omega: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsParams {
    /// Fit window; defaults depend on the regime.
    pub window: Option<[f64; 2]>,
    /// Relative tolerance on the predicted rate or limit.
    pub tolerance: Option<f64>,
    /// Largest max/min ratio of γ accepted as a bounded band.
    pub band_ratio: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| RunError::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every block the pipeline will read.
    pub fn validate(&self) -> Result<(), RunError> {
        use Pipeline::*;
        if matches!(self.pipeline, Simulate | Solve | Asymptotics | Compare) {
            self.law()?;
        }
        if matches!(self.pipeline, Simulate | Compare) {
            self.sim_config()?;
        }
        if matches!(self.pipeline, Solve | Asymptotics | Compare) {
            self.solver_config().validate()?;
        }
        if let Some(p) = &self.scale {
            if !(p.x_max > 0.0) || p.points == 0 {
                return Err(RunError::Validation("scale: need x_max > 0 and points >= 1".into()));
            }
        }
        if let Some(p) = &self.phi {
            if p.q.iter().any(|q| !(*q >= 0.0)) {
                return Err(RunError::Validation("phi: every q must be >= 0".into()));
            }
        }
        if let Some([lo, hi]) = self.asymptotics.as_ref().and_then(|a| a.window) {
            if !(lo < hi) {
                return Err(RunError::Validation(format!("asymptotics: window [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    pub fn law(&self) -> Result<OffspringLaw, RunError> {
        let block = self
            .offspring
            .as_ref()
            .ok_or_else(|| RunError::Validation("missing [offspring] block".into()))?;
        Ok(OffspringLaw::new(block.probs.clone())?)
    }

    pub fn sim_config(&self) -> Result<SimConfig, RunError> {
        let p = self.simulate.clone().unwrap_or_default();
        let mut cfg = SimConfig::new(self.model, self.law()?, p.levels, p.n_reps, self.seed)?;
        match p.kill_barrier {
            Some(b) if b <= 0.0 => cfg.kill_barrier = None,
            Some(b) => cfg.kill_barrier = Some(b),
            None => {}
        }
        if let Some(m) = p.max_particles {
            cfg.max_particles = m;
        }
        if let Some(dt) = p.euler_dt {
            cfg.backend = SimBackend::EulerGrid { dt };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let p = self.solve.clone().unwrap_or_default();
        let d = SolverConfig::default();
        SolverConfig {
            x_max: p.x_max.unwrap_or(d.x_max),
            h: p.h.unwrap_or(d.h),
            tol: p.tol.unwrap_or(d.tol),
            max_iter: p.max_iter.unwrap_or(d.max_iter),
            method: p.picard_omega.map_or(Method::Newton, |omega| Method::Picard { omega }),
            d_band: None,
        }
    }

    /// Canonical text used for hashing and for the manifest.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Built-in experiments, one per acceptance criterion they reproduce.
pub const PRESETS: &[(&str, &str)] = &[
    ("roots-scale", include_str!("../presets/roots-scale.toml")),
    ("potential-density", include_str!("../presets/potential-density.toml")),
    ("no-branching-compare", include_str!("../presets/no-branching-compare.toml")),
    ("subcritical-bm-rate", include_str!("../presets/subcritical-bm-rate.toml")),
    ("subcritical-stable-rate", include_str!("../presets/subcritical-stable-rate.toml")),
    ("critical-drift-up-limit", include_str!("../presets/critical-drift-up-limit.toml")),
    ("critical-bm-band", include_str!("../presets/critical-bm-band.toml")),
    ("critical-stable-band", include_str!("../presets/critical-stable-band.toml")),
    ("critical-drift-down-rate", include_str!("../presets/critical-drift-down-rate.toml")),
    ("cross-validate-critical-bm", include_str!("../presets/cross-validate-critical-bm.toml")),
];

pub fn preset(name: &str) -> Result<&'static str, RunError> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        RunError::Validation(format!("unknown preset {name}; available: {}", names.join(", ")))
    })
}
