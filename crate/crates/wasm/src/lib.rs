//! Browser bindings: normal-operator spectra, a single tamed least-squares fit
//! and a small rate sweep. Every entry point returns a JSON string.

use opker_core::estimators::{assemble_normal_system, simulate_dataset, tlse_solve};
use opker_core::forward::{EnsemblePreset, ForwardContext, ForwardModel, InputEnsemble};
use opker_core::harness::{run_rate_sweep, Experiment, ExperimentConfig, SlopeFit};
use opker_core::spectral::{sample_kernel, KernelProfile, SobolevClass};
use opker_core::{estimation_error, NoiseModel};
use serde_json::json;
use wasm_bindgen::prelude::*;

const EXP_MODES: usize = 16;
const GRID: usize = 128;
const CURVE_POINTS: usize = 200;

fn preset(decay: &str, rate: f64) -> Result<EnsemblePreset, String> {
    match decay {
        "poly" => Ok(EnsemblePreset::Poly { rate }),
        "exp" => Ok(EnsemblePreset::Exp { rate }),
        other => Err(format!("unknown decay {other:?}")),
    }
}

fn model(name: &str) -> Result<ForwardModel, String> {
    match name {
        "integral" => Ok(ForwardModel::Integral),
        "nonlocal" => Ok(ForwardModel::Nonlocal),
        "aggregation" => Ok(ForwardModel::Aggregation),
        other => Err(format!("unknown model {other:?}")),
    }
}

/// Leading eigenvalues of the normal operator and eigenfunction samples.
pub fn spectrum_json(model_name: &str, decay: &str, rate: f64, k: usize) -> Result<String, String> {
    let model = model(model_name)?;
    let ens = match model {
        ForwardModel::Aggregation => InputEnsemble::from_preset(EnsemblePreset::Rademacher { amplitude: 0.5 }, 8),
        _ => InputEnsemble::from_preset(preset(decay, rate)?, EXP_MODES),
    }
    .map_err(|e| e.to_string())?;
    let ctx = ForwardContext::new(model, ens, GRID).map_err(|e| e.to_string())?;
    let k = k.clamp(1, ctx.feature_count());
    let eig = ctx.eigendecompose(k, 256).map_err(|e| e.to_string())?;
    let s: Vec<f64> = (0..CURVE_POINTS).map(|i| (i as f64 + 0.5) / CURVE_POINTS as f64).collect();
    let funcs: Vec<Vec<f64>> =
        (1..=k.min(4)).map(|j| s.iter().map(|&x| eig.eval(j, x).unwrap_or(f64::NAN)).collect()).collect();
    Ok(json!({ "eigenvalues": eig.eigenvalues(), "s": s, "eigenfunctions": funcs }).to_string())
}

/// One dataset of `m` samples, fitted in dimension `n`; returns both kernels on a grid.
pub fn fit_json(decay: &str, m: usize, n: usize, sigma: f64, seed: u64) -> Result<String, String> {
    let ens = InputEnsemble::from_preset(preset(decay, 1.0)?, EXP_MODES).map_err(|e| e.to_string())?;
    let ctx = ForwardContext::new(ForwardModel::Integral, ens, GRID).map_err(|e| e.to_string())?;
    let eig = ctx.eigendecompose(2 * EXP_MODES, 0).map_err(|e| e.to_string())?;
    let class = SobolevClass::new(1.0, 10.0).map_err(|e| e.to_string())?;
    let truth = sample_kernel(&class, &eig, KernelProfile::NearBoundary { delta: 0.05 });
    let noise = NoiseModel::GaussianWhite { sigma };
    noise.validate().map_err(|e| e.to_string())?;
    let n = n.clamp(1, eig.len());
    let data = simulate_dataset(&ctx, &eig, &truth, noise, m.max(1), seed).map_err(|e| e.to_string())?;
    let sys = assemble_normal_system(&ctx, &data, &eig, n).map_err(|e| e.to_string())?;
    let kind = if decay == "exp" { opker_core::DecayKind::Exponential } else { opker_core::DecayKind::Polynomial };
    let est = tlse_solve(&sys, eig.eigenvalues(), kind).map_err(|e| e.to_string())?;
    let err = estimation_error(&est.coeffs, &truth, n);
    let s: Vec<f64> = (0..CURVE_POINTS).map(|i| (i as f64 + 0.5) / CURVE_POINTS as f64).collect();
    let curve = |c: &[f64]| -> Vec<f64> {
        s.iter().map(|&x| c.iter().enumerate().map(|(j, v)| v * eig.eval(j + 1, x).unwrap_or(0.0)).sum()).collect()
    };
    Ok(json!({
        "s": s,
        "truth": curve(&truth.coeffs),
        "estimate": curve(&est.coeffs),
        "cutoff": est.cutoff,
        "var_err": err.variance,
        "bias_err": err.bias,
        "total_err": err.total,
    })
    .to_string())
}

/// Oracle-dimension sweep over `M = 2^6 .. 2^11`.
pub fn sweep_json(decay: &str, reps: usize, seed: u64) -> Result<String, String> {
    preset(decay, 1.0)?;
    let text = format!(
        r#"
experiment_id = "demo"
model = "integral"
seed = {seed}
truncation = {k}

[ensemble]
preset = "{decay}"
rate = 1.0
modes = {EXP_MODES}

[class]
beta = 1.0
radius = 10.0

[sweep]
m_values = [64, 128, 256, 512, 1024, 2048]
repetitions = {reps}

[grid]
n = {GRID}
quad_nodes = 0
"#,
        k = 2 * EXP_MODES,
        reps = reps.clamp(1, 50),
    );
    let cfg = ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())?;
    let exp = Experiment::build(&cfg).map_err(|e| e.to_string())?;
    let res = run_rate_sweep(&exp, None).map_err(|e| e.to_string())?;
    let slope = match res.fit {
        SlopeFit::Fitted { slope, intercept, .. } => json!({ "slope": slope, "intercept": intercept }),
        SlopeFit::Degenerate { reason } => json!({ "degenerate": reason }),
    };
    Ok(json!({ "points": res.points, "fit": slope, "exponent": res.exponent }).to_string())
}

#[wasm_bindgen]
pub fn spectrum(model: &str, decay: &str, rate: f64, k: usize) -> Result<String, JsValue> {
    spectrum_json(model, decay, rate, k).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn fit(decay: &str, m: usize, n: usize, sigma: f64, seed: u64) -> Result<String, JsValue> {
    fit_json(decay, m, n, sigma, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep(decay: &str, reps: usize, seed: u64) -> Result<String, JsValue> {
    sweep_json(decay, reps, seed).map_err(|e| JsValue::from_str(&e))
}
