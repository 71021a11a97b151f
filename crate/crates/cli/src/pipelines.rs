//! The named pipelines. Each returns its artifacts in memory; the caller
//! writes them and the manifest.

use serde::Serialize;
use serde_json::{json, Value};
use snbranch_core::asymptotics::{fit_exp_rate, fit_power_product, predict, TailLaw};
use snbranch_core::scale::{PotentialDensity, ScaleEvaluator};
use snbranch_core::sim::{Simulator, TailEstimate};
use snbranch_core::solver::checks::{
    bound_chain_from, critical_renewal_residual, g_negative_from, reconstruct_delta, remainder_bound_violation,
    subcritical_renewal_residual, DeltaProfile,
};
use snbranch_core::solver::{solve_with_window, SolverReport, SurvivalCurve};
use snbranch_core::window::WindowLaw;
use snbranch_core::Error;

use crate::config::{ExperimentConfig, Pipeline};
use crate::RunError;

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// One line for the terminal.
    pub summary: String,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match cfg.pipeline {
        Pipeline::Phi => phi(cfg),
        Pipeline::Scale => scale(cfg),
        Pipeline::Simulate => simulate(cfg),
        Pipeline::Solve => solve(cfg).map(|s| s.outcome),
        Pipeline::Asymptotics => asymptotics(cfg),
        Pipeline::Compare => compare(cfg),
    }
}

fn csv_artifact<R: Serialize>(name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Artifact, RunError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    Ok(Artifact {
        name: name.into(),
        bytes: w.into_inner().map_err(|e| RunError::Io(e.to_string()))?,
    })
}

fn json_artifact(name: &str, value: &impl Serialize) -> Artifact {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serialises");
    bytes.push(b'\n');
    Artifact {
        name: name.into(),
        bytes,
    }
}

fn io(e: csv::Error) -> RunError {
    RunError::Io(e.to_string())
}

fn phi(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let m = cfg.model;
    let qs = cfg.phi.clone().unwrap_or_default().q;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for q in qs {
        let p = m.phi(q)?;
        let residual = (m.psi(p.phi) - q).abs();
        worst = worst.max(residual);
        rows.push((q, p.phi, p.psi_prime_at_phi, residual));
    }
    Ok(Outcome {
        artifacts: vec![csv_artifact("phi.csv", &["q", "phi", "psi_prime_at_phi", "residual"], rows)?],
        summary: format!("{} roots, max |Ψ(Φ(q)) − q| = {worst:.1e}", m.name()),
    })
}

fn scale(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let p = cfg.scale.clone().unwrap_or_default();
    let ev = ScaleEvaluator::auto(cfg.model, p.q)?;
    let pd = PotentialDensity::from_evaluator(ev.clone())?;
    let step = p.x_max / p.points as f64;
    let xs = (1..=p.points).rev().map(|i| -(i as f64) * step).chain((1..=p.points).map(|i| i as f64 * step));
    let mut rows = Vec::new();
    for x in xs {
        let (w, dw) = if x > 0.0 { (ev.w(x)?, ev.w_prime(x)?) } else { (0.0, 0.0) };
        rows.push((x, w, dw, pd.theta(x)?));
    }
    Ok(Outcome {
        artifacts: vec![csv_artifact("scale.csv", &["x", "W_q", "W_q_prime", "theta_q"], rows)?],
        summary: format!("{} scale function at q = {} on {} points", cfg.model.name(), p.q, 2 * p.points),
    })
}

fn run_simulation(cfg: &ExperimentConfig) -> Result<TailEstimate, RunError> {
    let est = Simulator::new(cfg.sim_config()?)?.estimate();
    est.check_truncation()?;
    Ok(est)
}

fn simulation_artifacts(cfg: &ExperimentConfig, est: &TailEstimate) -> Result<Vec<Artifact>, RunError> {
    let rows = est
        .levels
        .iter()
        .map(|l| (l.x, l.u_hat, l.ci_low, l.ci_high, l.n_reps, l.killed_frac(), l.truncated_frac()));
    let header = ["x", "u_hat", "ci_low", "ci_high", "n_reps", "killed_frac", "truncated_frac"];
    Ok(vec![
        csv_artifact("simulate.csv", &header, rows)?,
        json_artifact(
            "simulate.json",
            &json!({ "config": cfg.sim_config()?, "levels": est.levels, "version": env!("CARGO_PKG_VERSION") }),
        ),
    ])
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let est = run_simulation(cfg)?;
    let top = est.levels.last().expect("at least one level");
    Ok(Outcome {
        artifacts: simulation_artifacts(cfg, &est)?,
        summary: format!("u_hat({}) = {:.5} ± {:.5}", top.x, top.u_hat, top.half_width),
    })
}

struct Solved {
    window: WindowLaw,
    curve: SurvivalCurve,
    delta: DeltaProfile,
    outcome: Outcome,
}

fn numerical(e: Error) -> Value {
    Value::String(e.to_string())
}

fn solve(cfg: &ExperimentConfig) -> Result<Solved, RunError> {
    let law = cfg.law()?;
    let window = WindowLaw::new(cfg.model)?;
    let (curve, report) = solve_with_window(&window, &law, &cfg.solver_config())?;
    if !report.converged {
        return Err(RunError::Numerical(format!(
            "solver stopped after {} iterations with update {:.1e}",
            report.iterations, report.final_update
        )));
    }
    let delta = reconstruct_delta(&curve, &window, &law)?;
    let w0 = ScaleEvaluator::auto(cfg.model, 0.0)?;
    let mut rows = Vec::with_capacity(curve.len());
    for i in 0..curve.len() {
        let x = curve.x(i);
        let gamma = if x > 0.0 { x * w0.w(x)? * curve.values[i] } else { 0.0 };
        rows.push((x, curve.values[i], delta.values[i], gamma));
    }
    let residual = if law.is_critical() {
        critical_renewal_residual(&curve, &delta, &window, &law)
    } else {
        subcritical_renewal_residual(&curve, &delta, &window, &law)
    };
    let report_json = solve_report(&report, &curve, &delta, residual.map_err(numerical), &law);
    let outcome = Outcome {
        artifacts: vec![
            csv_artifact("solve.csv", &["x", "u", "delta", "gamma"], rows)?,
            json_artifact("solve.json", &report_json),
        ],
        summary: format!(
            "{} iterations, final update {:.1e}, u({}) = {:.6e}",
            report.iterations,
            report.final_update,
            curve.x_max(),
            curve.values.last().copied().unwrap_or(f64::NAN)
        ),
    };
    Ok(Solved {
        window,
        curve,
        delta,
        outcome,
    })
}

fn solve_report(
    report: &SolverReport,
    curve: &SurvivalCurve,
    delta: &DeltaProfile,
    residual: Result<impl Serialize, Value>,
    law: &snbranch_core::offspring::OffspringLaw,
) -> Value {
    json!({
        "solver": report,
        "tail": curve.tail,
        "renewal_residual": match residual {
            Ok(r) => json!(r),
            Err(e) => json!({ "not_applicable": e }),
        },
        "delta": {
            "decay_rate": delta.decay_rate(),
            "resolved_to": delta.resolved_to,
            "envelope": delta.envelope,
        },
        "remainder_bound_violation": remainder_bound_violation(curve, law),
        "g_negative_from": g_negative_from(curve, law),
        "bound_chain_from": bound_chain_from(curve, delta, law),
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn asymptotics(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let law = cfg.law()?;
    let prediction = predict(&cfg.model, &law)?;
    let mut solved = solve(cfg)?;
    let params = cfg.asymptotics.clone().unwrap_or_default();
    let x_end = solved.curve.x_max();
    let points: Vec<(f64, f64)> = (0..solved.curve.len()).map(|i| (solved.curve.x(i), solved.curve.values[i])).collect();
    let (fitted, pass, line) = match prediction.law {
        TailLaw::Exponential { rate } => {
            let [lo, hi] = params.window.unwrap_or([0.75 * x_end, x_end]);
            let tol = params.tolerance.unwrap_or(0.02);
            let fit = fit_exp_rate(&points, (lo, hi))?;
            let dev = (fit.rate / rate - 1.0).abs();
            let line = format!("rate {:.5} ± {:.1e} vs predicted {rate:.5} ({:.2}%)", fit.rate, fit.stderr, 100.0 * dev);
            (json!({ "window": [lo, hi], "fit": fit, "relative_deviation": dev, "tolerance": tol }), dev <= tol, line)
        }
        TailLaw::InverseLinear { limit } => {
            let [lo, hi] = params.window.unwrap_or([0.25 * x_end, 0.5 * x_end]);
            let tol = params.tolerance.unwrap_or(0.1);
            let xu: Vec<(f64, f64)> = points.iter().filter(|p| p.0 >= lo && p.0 <= hi).map(|&(x, u)| (x, x * u)).collect();
            let at_end = hi * solved.curve.value(hi);
            let dev = (at_end / limit - 1.0).abs();
            let line = format!("x·u({hi}) = {at_end:.5} vs limit {limit:.5} ({:.2}%)", 100.0 * dev);
            let sampled: Vec<_> = xu.iter().step_by((xu.len() / 20).max(1)).collect();
            (
                json!({ "window": [lo, hi], "x_u_at_end": at_end, "x_u": sampled, "relative_deviation": dev, "tolerance": tol }),
                dev <= tol,
                line,
            )
        }
        TailLaw::ScaleEnvelope { gamma_constant, .. } => {
            let [lo, hi] = params.window.unwrap_or([20.0_f64.min(0.1 * x_end), 0.5 * x_end]);
            let tol = params.tolerance.unwrap_or(0.15);
            let band = params.band_ratio.unwrap_or(3.0);
            let w0 = ScaleEvaluator::auto(cfg.model, 0.0)?;
            let fit = fit_power_product(&points, |x| w0.w(x), (lo, hi))?;
            let closest = gamma_constant.map(|g| fit.closest_approach(g));
            let pass = fit.ratio <= band && closest.is_none_or(|c| c <= tol);
            let line = format!(
                "γ ∈ [{:.4}, {:.4}], ratio {:.3}{}",
                fit.min,
                fit.max,
                fit.ratio,
                match (gamma_constant, closest) {
                    (Some(g), Some(c)) => format!(", closest to {g:.4} within {:.2}%", 100.0 * c),
                    _ => String::new(),
                }
            );
            let summary = json!({
                "window": [lo, hi], "median": fit.median, "min": fit.min, "max": fit.max, "ratio": fit.ratio,
                "band_ratio": band, "regime_mismatch": fit.regime_mismatch, "closest_relative": closest, "tolerance": tol,
            });
            (summary, pass, line)
        }
    };
    let report = json!({
        "prediction": prediction,
        "fitted": fitted,
        "pass": pass,
        "version": env!("CARGO_PKG_VERSION"),
    });
    solved.outcome.artifacts.push(json_artifact("asymptotics.json", &report));
    Ok(Outcome {
        artifacts: solved.outcome.artifacts,
        summary: format!("{}: {line}", if pass { "PASS" } else { "FAIL" }),
    })
}

fn compare(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    // The solver and the simulator build their own window laws.
    let solved = solve(cfg)?;
    let est = run_simulation(cfg)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for l in &est.levels {
        let u = solved.curve.value(l.x);
        let dev = (u - l.u_hat).abs() / l.half_width;
        worst = worst.max(dev);
        rows.push((l.x, u, l.u_hat, l.half_width, dev));
    }
    let pass = worst <= 3.0;
    let mut artifacts = solved.outcome.artifacts;
    artifacts.extend(simulation_artifacts(cfg, &est)?);
    artifacts.push(csv_artifact(
        "compare.csv",
        &["x", "u_solver", "u_hat", "half_width", "deviation_half_widths"],
        rows,
    )?);
    artifacts.push(json_artifact(
        "compare.json",
        &json!({
            "max_deviation_half_widths": worst,
            "limit_half_widths": 3.0,
            "pass": pass,
            "delta_decay_rate": solved.delta.decay_rate(),
            "phi1": solved.window.phi1(),
        }),
    ));
    Ok(Outcome {
        artifacts,
        summary: format!(
            "{}: worst solver–simulator gap {worst:.2} half-widths",
            if pass { "PASS" } else { "FAIL" }
        ),
    })
}
