//! Browser bindings for the demo page. Every entry point takes an instance
//! JSON document and returns a JSON string; errors come back as JS strings.

use mwauction::model::{validate_instance, Instance};
use mwauction::synthesis::{binary_search_revenue, synthesize, Synthesis, SynthesisConfig};
use mwauction::verify::{brute_force_opt, verify_mechanism, VerifyMode};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn load(instance: &str) -> Result<Instance, String> {
    let inst = Instance::from_json(instance).map_err(|e| e.to_string())?;
    let problems = validate_instance(&inst);
    if !problems.is_empty() {
        return Err(mwauction::Error::InvalidInstance(problems).to_string());
    }
    Ok(inst)
}

fn config(inst: &Instance, eps_frac: f64, seed: u64) -> SynthesisConfig {
    SynthesisConfig {
        seed,
        ..SynthesisConfig::with_epsilon(eps_frac * inst.scale)
    }
}

/// Feasibility and verified objective at `points` evenly spaced targets in
/// `[0, hi]`, plus the brute-force optimum when it is defined.
pub fn revenue_curve_json(instance: &str, eps_frac: f64, points: usize, hi: f64, seed: u64) -> Result<String, String> {
    let inst = load(instance)?;
    let cfg = config(&inst, eps_frac, seed);
    let opt = if inst.inequality_mode {
        None
    } else {
        brute_force_opt(&inst).ok().map(|b| b.opt)
    };
    let mut rows = Vec::with_capacity(points);
    for k in 0..points {
        let target = if points > 1 {
            hi * k as f64 / (points - 1) as f64
        } else {
            hi
        };
        let run = synthesize(&inst, &cfg, target).map_err(|e| e.to_string())?;
        let (objective, bic) = match run.mechanism() {
            Some(m) => {
                let rep = verify_mechanism(m, VerifyMode::Exact, None).map_err(|e| e.to_string())?;
                (Some(rep.objective), Some(rep.max_bic_violation))
            }
            None => (None, None),
        };
        rows.push(json!({
            "target": target,
            "feasible": run.mechanism().is_some(),
            "rounds": run.log().len(),
            "objective": objective,
            "bic": bic,
        }));
    }
    Ok(json!({ "epsilon": cfg.epsilon, "opt": opt, "points": rows }).to_string())
}

/// Per-round residuals and oracle values of one synthesis run.
pub fn residual_curve_json(
    instance: &str,
    eps_frac: f64,
    target: f64,
    rounds: usize,
    seed: u64,
) -> Result<String, String> {
    let inst = load(instance)?;
    let cfg = SynthesisConfig {
        rounds: Some(rounds),
        early_stop: false,
        ..config(&inst, eps_frac, seed)
    };
    let run = synthesize(&inst, &cfg, target).map_err(|e| e.to_string())?;
    let status = match &run {
        Synthesis::Feasible { .. } => "feasible".to_string(),
        Synthesis::InfeasibleAt { round, .. } => match round {
            Some(r) => format!("infeasible at round {r}"),
            None => "no convergence".to_string(),
        },
    };
    let log = run.log();
    Ok(json!({
        "status": status,
        "round": log.iter().map(|r| r.round).collect::<Vec<_>>(),
        "max_violation": log.iter().map(|r| r.max_violation).collect::<Vec<_>>(),
        "mean_violation": log.iter().map(|r| r.mean_violation).collect::<Vec<_>>(),
        "c_value": log.iter().map(|r| r.c_value).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Full revenue search, then exact verification of the result.
pub fn search_json(instance: &str, eps_frac: f64, seed: u64) -> Result<String, String> {
    let inst = load(instance)?;
    let found = binary_search_revenue(&inst, &config(&inst, eps_frac, seed)).map_err(|e| e.to_string())?;
    let opt = if inst.inequality_mode {
        None
    } else {
        brute_force_opt(&inst).ok().map(|b| b.opt)
    };
    let rep = verify_mechanism(&found.mechanism, VerifyMode::Exact, opt).map_err(|e| e.to_string())?;
    Ok(json!({
        "revenue": found.revenue,
        "steps": found.steps,
        "snapshots": found.mechanism.num_snapshots(),
        "report": rep,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn revenue_curve(instance: &str, eps_frac: f64, points: usize, hi: f64, seed: u64) -> Result<String, JsError> {
    revenue_curve_json(instance, eps_frac, points, hi, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn residual_curve(instance: &str, eps_frac: f64, target: f64, rounds: usize, seed: u64) -> Result<String, JsError> {
    residual_curve_json(instance, eps_frac, target, rounds, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn search(instance: &str, eps_frac: f64, seed: u64) -> Result<String, JsError> {
    search_json(instance, eps_frac, seed).map_err(|e| JsError::new(&e))
}
