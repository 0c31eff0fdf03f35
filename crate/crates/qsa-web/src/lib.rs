//! Browser bindings. Each export returns a JSON string for the page to plot.
//!
//! The `*_json` functions are plain Rust so they can be tested natively; the
//! exported wrappers only convert errors into JS exceptions.

use qsa::amplitude::{ndae, nduae, AmplitudeInstance, EstimatorContext};
use qsa::phase::{pe_distribution, OracleMode};
use qsa::pipeline::{run_experiment, to_json, Command, ExperimentConfig};
use qsa::qcore::RandomSource;
use qsa::stats::summarize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_POINTS: u32 = 1 << 12;
const MAX_RUNS: u32 = 20_000;
const MAX_REPS: u32 = 200;

/// Phase-estimation outcome law for eigenphase `theta` with `t` points.
pub fn phase_law_json(theta: f64, t: u32) -> Result<String, String> {
    if !t.is_power_of_two() || t > MAX_POINTS {
        return Err(format!("t must be a power of two up to {MAX_POINTS}"));
    }
    let probs = pe_distribution(theta, t as u64).map_err(|e| e.to_string())?;
    Ok(json!({ "theta": theta, "t": t, "probs": probs }).to_string())
}

/// Repeated amplitude estimation on one amplitude `p`, either the
/// nondestructive estimator with failure rate `eta` or the unbiased one
/// with accuracy `eta`.
pub fn amplitude_runs_json(p: f64, t: f64, eta: f64, runs: u32, seed: u64, unbiased: bool) -> Result<String, String> {
    if runs == 0 || runs > MAX_RUNS {
        return Err(format!("runs must be in 1..={MAX_RUNS}"));
    }
    let ctx = EstimatorContext::new(OracleMode::Exact);
    let mut rng = RandomSource::new(seed);
    let mut estimates = Vec::with_capacity(runs as usize);
    let mut restored = 0u32;
    let mut reflections = 0u64;
    for _ in 0..runs {
        let mut inst = AmplitudeInstance::new(p).map_err(|e| e.to_string())?;
        let x = if unbiased {
            nduae(&mut inst, t, eta, &ctx, &mut rng).map_err(|e| e.to_string())?.estimate
        } else {
            ndae(&mut inst, t, eta, &ctx, &mut rng).map_err(|e| e.to_string())?
        };
        estimates.push(x);
        restored += inst.restored as u32;
        reflections += inst.reflections;
    }
    let s = summarize(&estimates);
    Ok(json!({
        "p": p,
        "estimates": estimates,
        "mean": s.mean,
        "se_mean": s.se_mean,
        "variance": s.variance,
        "restored_fraction": restored as f64 / runs as f64,
        "mean_reflections": reflections as f64 / runs as f64,
    })
    .to_string())
}

/// Cooling schedule and partition-function estimates for a model spec such
/// as `matchings:triangle` or `potts:C4:3`.
pub fn partition_json(model: &str, eps: f64, reps: u32, seed: u64, target_beta: &str) -> Result<String, String> {
    if reps == 0 || reps > MAX_REPS {
        return Err(format!("reps must be in 1..={MAX_REPS}"));
    }
    let mut config = ExperimentConfig::new(Command::Partition);
    config.model.spec = Some(model.to_string());
    config.model.target_beta = Some(target_beta.trim()).filter(|s| !s.is_empty()).map(String::from);
    config.run.eps = eps;
    config.run.reps = reps as u64;
    config.run.seed = seed;
    let report = run_experiment(&config).map_err(|e| e.to_string())?;
    to_json(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn phase_law(theta: f64, t: u32) -> Result<String, JsValue> {
    phase_law_json(theta, t).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn amplitude_runs(p: f64, t: f64, eta: f64, runs: u32, seed: u32, unbiased: bool) -> Result<String, JsValue> {
    amplitude_runs_json(p, t, eta, runs, seed as u64, unbiased).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn partition(model: &str, eps: f64, reps: u32, seed: u32, target_beta: &str) -> Result<String, JsValue> {
    partition_json(model, eps, reps, seed as u64, target_beta).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_law_sums_to_one() {
        let v: serde_json::Value = serde_json::from_str(&phase_law_json(0.3, 16).unwrap()).unwrap();
        let total: f64 = v["probs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(phase_law_json(0.3, 12).is_err());
    }

    #[test]
    fn amplitude_runs_report_every_estimate() {
        let v: serde_json::Value = serde_json::from_str(&amplitude_runs_json(0.25, 16.0, 0.05, 50, 1, true).unwrap()).unwrap();
        assert_eq!(v["estimates"].as_array().unwrap().len(), 50);
        assert!(amplitude_runs_json(0.25, 16.0, 0.05, 0, 1, false).is_err());
    }

    #[test]
    fn partition_reports_schedule_and_runs() {
        let v: serde_json::Value = serde_json::from_str(&partition_json("matchings:triangle", 0.25, 3, 2, "").unwrap()).unwrap();
        assert_eq!(v["runs"].as_array().unwrap().len(), 3);
        assert!(v["schedule"]["betas"].as_array().unwrap().len() >= 2);
        assert!(partition_json("ising:edge", 0.25, 1, 1, "").is_err());
    }
}
