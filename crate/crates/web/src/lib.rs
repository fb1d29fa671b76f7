//! WebAssembly bindings for the interactive demo page.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use sparse_dve::analysis::{sparsify_fit, spread_study, SparsifyConfig, SpreadConfig};
use sparse_dve::dve::{cc_loss_value, confusion, contribution};

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Confusion per step, contribution per trajectory and the loss value for
/// trajectories given as JSON `[[[alpha_1, ..., alpha_N], ...], ...]`.
pub fn confusion_report(trajectories_json: &str, k1: f64, k2: f64) -> Result<Value, String> {
    let trajectories: Vec<Vec<Vec<f64>>> = serde_json::from_str(trajectories_json).map_err(|e| e.to_string())?;
    let mut deltas = Vec::with_capacity(trajectories.len());
    let mut rhos = Vec::with_capacity(trajectories.len());
    for traj in &trajectories {
        deltas.push(traj.iter().map(|a| confusion(a)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?);
        rhos.push(contribution(traj).map_err(|e| e.to_string())?);
    }
    let loss = cc_loss_value(&trajectories, k1, k2, 1e-8).map_err(|e| e.to_string())?;
    Ok(json!({ "delta": deltas, "rho": rhos, "loss": loss }))
}

/// Trace of minimising the confusion-contribution loss on a fixed batch.
pub fn sparsify_trace(iterations: usize, seed: u64) -> Result<Value, String> {
    let cfg = SparsifyConfig { iterations, seed, log_every: (iterations / 40).max(1), ..SparsifyConfig::default() };
    let report = sparsify_fit(&cfg).map_err(|e| e.to_string())?;
    let rows: Vec<Value> = report
        .checkpoints
        .iter()
        .map(|c| json!({ "iteration": c.iteration, "loss": c.loss, "median_max_alpha": c.median_max_alpha, "mean_delta": c.mean_delta }))
        .collect();
    Ok(Value::Array(rows))
}

/// Cluster-mean spread and value error of the plain and sparsified fits for one seed.
pub fn spread_comparison(seed: u64, iterations: usize) -> Result<Value, String> {
    let cfg = SpreadConfig { seeds: vec![seed], iterations, ..SpreadConfig::default() };
    let report = spread_study(&cfg).map_err(|e| e.to_string())?;
    let row = &report.rows[0];
    let fit = |f: &sparse_dve::analysis::FitResult| {
        json!({ "spread": f.spread, "mean_abs_error": f.mean_abs_error, "mean_delta": f.final_mean_delta })
    };
    Ok(json!({ "seed": seed, "mse": fit(&row.mse), "sparse": fit(&row.sparse) }))
}

#[wasm_bindgen(js_name = confusionReport)]
pub fn confusion_report_js(trajectories_json: &str, k1: f64, k2: f64) -> Result<String, JsError> {
    confusion_report(trajectories_json, k1, k2).map(|v| v.to_string()).map_err(fail)
}

#[wasm_bindgen(js_name = sparsifyTrace)]
pub fn sparsify_trace_js(iterations: usize, seed: u64) -> Result<String, JsError> {
    sparsify_trace(iterations, seed).map(|v| v.to_string()).map_err(fail)
}

#[wasm_bindgen(js_name = spreadComparison)]
pub fn spread_comparison_js(seed: u64, iterations: usize) -> Result<String, JsError> {
    spread_comparison(seed, iterations).map(|v| v.to_string()).map_err(fail)
}
