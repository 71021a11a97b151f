//! Monte Carlo estimation of u(x) = P(M ≥ x) for the branching process.
//!
//! Each replicate processes particles breadth first. A particle born at y
//! lives an exponential time; its excursion contributes y + S_e to the
//! running maximum and its children start at y + L_e. One replicate serves
//! every level: level x is hit iff the running maximum reaches x, and the
//! replicate stops as soon as the top level is hit. Particles further than
//! the kill barrier B below the lowest level not yet hit are discarded.
//!
//! Every particle draws from its own ChaCha stream keyed by (seed,
//! replicate, genealogical key). Results therefore do not depend on the
//! number of worker threads, and runs that differ only in B are coupled
//! particle by particle.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{LevyModel, Variant};
use crate::offspring::OffspringLaw;
use crate::window::WindowLaw;

/// Default per-replicate particle cap.
pub const DEFAULT_MAX_PARTICLES: usize = 10_000_000;
/// Levels whose truncated fraction exceeds this are flagged as aborted.
pub const MAX_TRUNCATION_RATE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimBackend {
    WindowExact,
    EulerGrid { dt: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: LevyModel,
    pub law: OffspringLaw,
    pub levels: Vec<f64>,
    pub n_reps: u64,
    pub seed: u64,
    /// `None` disables killing.
    pub kill_barrier: Option<f64>,
    pub max_particles: usize,
    pub backend: SimBackend,
}

impl SimConfig {
    /// Window backend, default cap and the default barrier 15/Φ(1).
    pub fn new(model: LevyModel, law: OffspringLaw, levels: Vec<f64>, n_reps: u64, seed: u64) -> Result<Self> {
        let barrier = 15.0 / model.phi(1.0)?.phi;
        let cfg = SimConfig {
            model,
            law,
            levels,
            n_reps,
            seed,
            kill_barrier: Some(barrier),
            max_particles: DEFAULT_MAX_PARTICLES,
            backend: SimBackend::WindowExact,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidParameter("no levels".into()));
        }
        if self.levels.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter("levels must be finite and >= 0".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("levels must be strictly ascending".into()));
        }
        if self.n_reps == 0 {
            return Err(Error::InvalidParameter("n_reps must be >= 1".into()));
        }
        if let Some(b) = self.kill_barrier {
            if !(b > 0.0) {
                return Err(Error::InvalidParameter(format!("kill barrier {b} must be > 0")));
            }
        }
        if self.max_particles == 0 {
            return Err(Error::InvalidParameter("max_particles must be >= 1".into()));
        }
        if let SimBackend::EulerGrid { dt } = self.backend {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Result of one replicate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicateOutcome {
    /// Highest position seen; at least the top level when it was hit.
    pub max_reached: f64,
    pub killed: bool,
    pub truncated: bool,
    /// The queue emptied before the top level was hit.
    pub died: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub x: f64,
    pub hits: u64,
    pub n_reps: u64,
    pub u_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub half_width: f64,
    /// Replicates that missed x after discarding at least one particle.
    pub killed: u64,
    /// Replicates that missed x because the particle cap was reached.
    pub truncated: u64,
    pub aborted: bool,
}

impl LevelEstimate {
    pub fn killed_frac(&self) -> f64 {
        self.killed as f64 / self.n_reps as f64
    }

    pub fn truncated_frac(&self) -> f64 {
        self.truncated as f64 / self.n_reps as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub levels: Vec<LevelEstimate>,
}

impl TailEstimate {
    /// Fails on the first level whose truncation rate exceeds the limit.
    pub fn check_truncation(&self) -> Result<()> {
        match self.levels.iter().find(|l| l.aborted) {
            Some(l) => Err(Error::Truncation {
                level: l.x,
                rate: l.truncated_frac(),
            }),
            None => Ok(()),
        }
    }
}

/// Simulator with its precomputed window law.
#[derive(Clone, Debug)]
pub struct Simulator {
    cfg: SimConfig,
    window: Option<WindowLaw>,
    child_cdf: Vec<f64>,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let window = match cfg.backend {
            SimBackend::WindowExact => Some(WindowLaw::new(cfg.model)?),
            SimBackend::EulerGrid { .. } => None,
        };
        Self::build(cfg, window)
    }

    /// Reuses an already built window law for the same model.
    pub fn with_window(cfg: SimConfig, window: WindowLaw) -> Result<Self> {
        cfg.validate()?;
        if window.model() != &cfg.model {
            return Err(Error::InvalidParameter("window law built for another model".into()));
        }
        Self::build(cfg, Some(window))
    }

    fn build(cfg: SimConfig, window: Option<WindowLaw>) -> Result<Self> {
        let mut acc = 0.0;
        let child_cdf = cfg
            .law
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Simulator { cfg, window, child_cdf })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn children<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let n = self.child_cdf.partition_point(|&c| c <= u);
        n.min(self.child_cdf.len() - 1)
    }

    /// One replicate over all configured levels.
    pub fn run_replicate(&self, rep: u64) -> ReplicateOutcome {
        let levels = &self.cfg.levels;
        let top = *levels.last().expect("validated");
        let mut max_reached = f64::NEG_INFINITY;
        let mut next_level = 0usize;
        let mut killed = false;
        let mut created = 1usize;
        let mut queue: VecDeque<(f64, u64)> = VecDeque::new();
        queue.push_back((0.0, ROOT_KEY));
        while let Some((y, key)) = queue.pop_front() {
            let mut rng = particle_rng(self.cfg.seed, rep, key);
            let (peak, end) = match (&self.window, self.cfg.backend) {
                (Some(w), _) => {
                    let (s, l) = w.sample_window(&mut rng);
                    (y + s, y + l)
                }
                (None, SimBackend::EulerGrid { dt }) => {
                    let (m, e) = euler_path(&self.cfg.model, dt, &mut rng);
                    (y + m, y + e)
                }
                (None, SimBackend::WindowExact) => unreachable!("window built in new"),
            };
            if peak > max_reached {
                max_reached = peak;
                while next_level < levels.len() && levels[next_level] <= max_reached {
                    next_level += 1;
                }
                if peak >= top {
                    return ReplicateOutcome {
                        max_reached,
                        killed,
                        truncated: false,
                        died: false,
                    };
                }
            }
            let n = self.children(&mut rng);
            if n == 0 {
                continue;
            }
            if let Some(b) = self.cfg.kill_barrier {
                if end < levels[next_level] - b {
                    killed = true;
                    continue;
                }
            }
            created += n;
            if created > self.cfg.max_particles {
                return ReplicateOutcome {
                    max_reached,
                    killed,
                    truncated: true,
                    died: false,
                };
            }
            for i in 0..n {
                queue.push_back((end, child_key(key, i)));
            }
        }
        ReplicateOutcome {
            max_reached,
            killed,
            truncated: false,
            died: true,
        }
    }

    /// Runs all replicates in parallel on the current rayon pool.
    pub fn estimate(&self) -> TailEstimate {
        let nl = self.cfg.levels.len();
        let zero = || Counts::new(nl);
        let counts = (0..self.cfg.n_reps)
            .into_par_iter()
            .fold(zero, |mut c, rep| {
                c.add(&self.cfg.levels, &self.run_replicate(rep));
                c
            })
            .reduce(zero, Counts::merge);
        let n = self.cfg.n_reps;
        let levels = self
            .cfg
            .levels
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let p = counts.hits[i] as f64 / n as f64;
                let half = 1.96 * (p * (1.0 - p) / n as f64).sqrt();
                let truncated = counts.truncated[i];
                LevelEstimate {
                    x,
                    hits: counts.hits[i],
                    n_reps: n,
                    u_hat: p,
                    ci_low: (p - half).max(0.0),
                    ci_high: (p + half).min(1.0),
                    half_width: half,
                    killed: counts.killed[i],
                    truncated,
                    aborted: truncated as f64 > MAX_TRUNCATION_RATE * n as f64,
                }
            })
            .collect();
        TailEstimate { levels }
    }
}

/// Convenience wrapper: build the simulator and run it.
pub fn estimate_survival(cfg: &SimConfig) -> Result<TailEstimate> {
    Ok(Simulator::new(cfg.clone())?.estimate())
}

#[derive(Clone, Debug)]
struct Counts {
    hits: Vec<u64>,
    killed: Vec<u64>,
    truncated: Vec<u64>,
}

impl Counts {
    fn new(n: usize) -> Self {
        Counts {
            hits: vec![0; n],
            killed: vec![0; n],
            truncated: vec![0; n],
        }
    }

    fn add(&mut self, levels: &[f64], o: &ReplicateOutcome) {
        for (i, &x) in levels.iter().enumerate() {
            if o.max_reached >= x {
                self.hits[i] += 1;
            } else {
                self.killed[i] += o.killed as u64;
                self.truncated[i] += o.truncated as u64;
            }
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        for i in 0..self.hits.len() {
            self.hits[i] += other.hits[i];
            self.killed[i] += other.killed[i];
            self.truncated[i] += other.truncated[i];
        }
        self
    }
}

const ROOT_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn child_key(parent: u64, index: usize) -> u64 {
    splitmix(parent ^ splitmix(index as u64 + 1))
}

fn particle_rng(seed: u64, rep: u64, key: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&rep.to_le_bytes());
    bytes[16..24].copy_from_slice(&key.to_le_bytes());
    bytes[24..].copy_from_slice(&splitmix(key ^ rep).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Stream for auxiliary path simulations (one per index).
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    particle_rng(seed, index, 0)
}

/// One particle's lifetime on a grid of step dt: (running max over grid
/// points, final displacement). Underestimates the true supremum.
pub fn euler_path<R: Rng>(model: &LevyModel, dt: f64, rng: &mut R) -> (f64, f64) {
    let life: f64 = Exp::new(1.0).expect("rate 1").sample(rng);
    let mut t = 0.0;
    let mut x = 0.0f64;
    let mut m = 0.0f64;
    while t < life {
        let step = dt.min(life - t);
        x += increment(model, step, rng);
        m = m.max(x);
        t += step;
    }
    (m, x)
}

/// Draws L_t for t = dt.
pub fn increment<R: Rng>(model: &LevyModel, dt: f64, rng: &mut R) -> f64 {
    let normal = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
    match model.variant() {
        Variant::BrownianDrift { a, eta } => a * dt + eta * dt.sqrt() * normal(rng),
        Variant::SnStable { alpha, c } => stable_increment(alpha, c, dt, rng),
        Variant::StableWithDrift { a, alpha, c } => a * dt + stable_increment(alpha, c, dt, rng),
        Variant::BrownianExpJumps { a, eta, rho, mu } => {
            let mut x = a * dt + eta * dt.sqrt() * normal(rng);
            if rho > 0.0 {
                let k: f64 = Poisson::new(rho * dt).expect("positive mean").sample(rng);
                let jump = Exp::new(mu).expect("positive rate");
                for _ in 0..k as u64 {
                    x -= jump.sample(rng);
                }
            }
            x
        }
    }
}

/// Increment over time dt of the process with Ψ(λ) = cλ^α.
fn stable_increment<R: Rng>(alpha: f64, c: f64, dt: f64, rng: &mut R) -> f64 {
    if alpha == 2.0 {
        let z: f64 = StandardNormal.sample(rng);
        return (2.0 * c * dt).sqrt() * z;
    }
    let sigma = (c * (std::f64::consts::FRAC_PI_2 * alpha).cos().abs()).powf(1.0 / alpha);
    sigma * dt.powf(1.0 / alpha) * stable_neg_skew(alpha, rng)
}

/// Chambers–Mallows–Stuck draw from S_α(1, −1, 0), 1 < α < 2.
pub fn stable_neg_skew<R: Rng>(alpha: f64, rng: &mut R) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    let beta = -1.0;
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp::new(1.0).expect("rate 1").sample(rng);
    let tan = (FRAC_PI_2 * alpha).tan();
    let b = (beta * tan).atan() / alpha;
    let s = (1.0 + beta * beta * tan * tan).powf(0.5 / alpha);
    let av = alpha * (v + b);
    s * av.sin() / v.cos().powf(1.0 / alpha) * ((v - av).cos() / w).powf((1.0 - alpha) / alpha)
}
