//! Browser bindings. Each export takes JSON documents in the same formats the
//! CLI reads and returns a JSON string.

use std::path::Path;

use serde_json::{json, Value};
use tdoa_forge::geometry::{Environment, Vec3};
use tdoa_forge::io;
use tdoa_forge::measurement::{AnchorPlacement, Pairing, TdoaParams};
use tdoa_forge::placement::{
    bcm_optimize, bias_vector, heatmap, mse_lower_bound, spread_initialization, BcmConfig, PlacementSearchSpace,
    SurfaceGridOptions,
};
use wasm_bindgen::prelude::*;

fn params(sigma: f64, kappa: f64) -> TdoaParams {
    TdoaParams { nlos_bias_per_meter: kappa, ..TdoaParams::unbiased(sigma) }
}

fn env(text: &str) -> Result<Environment, String> {
    io::parse_environment(text, Path::new("environment")).map_err(|e| e.to_string())
}

fn placement(text: &str) -> Result<AnchorPlacement, String> {
    io::parse_placement(text, Path::new("placement")).map_err(|e| e.to_string())
}

/// RMSE bound over the horizontal slice at `height`; unobservable cells are null.
pub fn heatmap_json(env_json: &str, placement_json: &str, height: f64, resolution: f64, sigma: f64, kappa: f64) -> Result<String, String> {
    let env = env(env_json)?;
    let pl = placement(placement_json)?;
    let h = heatmap(&env, &pl, &params(sigma, kappa), height, resolution).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = (0..h.ys.len()).map(|iy| (0..h.xs.len()).map(|ix| h.get(ix, iy).rmse_lb).collect()).collect();
    let out = json!({
        "xs": h.xs,
        "ys": h.ys,
        "rmse": rows,
        "min": h.finite_min(),
        "anchors": pl.anchors.iter().map(|a| [a.x, a.y, a.z]).collect::<Vec<_>>(),
    });
    Ok(out.to_string())
}

/// Bound terms at a single point.
pub fn point_bound_json(env_json: &str, placement_json: &str, x: f64, y: f64, z: f64, sigma: f64, kappa: f64) -> Result<String, String> {
    let env = env(env_json)?;
    let pl = placement(placement_json)?;
    let p = Vec3::new(x, y, z);
    let params = params(sigma, kappa);
    let b = mse_lower_bound(&p, &pl, &env, &params).map_err(|e| e.to_string())?;
    let delta = bias_vector(&p, &pl, &env, &params).map_err(|e| e.to_string())?;
    let out = json!({
        "observable": b.observable,
        "rmse_lb": b.rmse(),
        "variance_term": b.variance_term,
        "bias_term": b.bias_term,
        "conditioning": b.conditioning,
        "bias": delta.map(|d| [d.x, d.y, d.z]),
    });
    Ok(out.to_string())
}

/// Block-coordinate placement of `anchors` anchors on the boundary surfaces.
pub fn optimize_json(
    env_json: &str,
    targets_json: &str,
    anchors: usize,
    disjoint: bool,
    resolution: f64,
    sigma: f64,
    kappa: f64,
) -> Result<String, String> {
    let env = env(env_json)?;
    let targets = io::parse_targets(targets_json, Path::new("targets"), Some(&env)).map_err(|e| e.to_string())?;
    let search = PlacementSearchSpace::surface_grid(&env, SurfaceGridOptions { resolution, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let pairing = if disjoint { Pairing::Disjoint } else { Pairing::Ring };
    let start = spread_initialization(&search, &targets, anchors, 0).map_err(|e| e.to_string())?;
    let initial = AnchorPlacement::with_pairing(start, pairing).map_err(|e| e.to_string())?;
    let res = bcm_optimize(&targets, &search, &initial, &env, &params(sigma, kappa), &BcmConfig::default())
        .map_err(|e| e.to_string())?;
    let placement: Value = serde_json::from_str(&io::placement_to_json(&res.placement)).map_err(|e| e.to_string())?;
    let out = json!({
        "placement": placement,
        "candidates": search.candidates.len(),
        "initial_metric": res.initial_metric,
        "aggregate_rmse": res.report.aggregate_rmse,
        "history": res.history,
    });
    Ok(out.to_string())
}

#[wasm_bindgen]
pub fn heatmap_slice(env_json: &str, placement_json: &str, height: f64, resolution: f64, sigma: f64, kappa: f64) -> Result<String, JsValue> {
    heatmap_json(env_json, placement_json, height, resolution, sigma, kappa).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn point_bound(env_json: &str, placement_json: &str, x: f64, y: f64, z: f64, sigma: f64, kappa: f64) -> Result<String, JsValue> {
    point_bound_json(env_json, placement_json, x, y, z, sigma, kappa).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn optimize(
    env_json: &str,
    targets_json: &str,
    anchors: usize,
    disjoint: bool,
    resolution: f64,
    sigma: f64,
    kappa: f64,
) -> Result<String, JsValue> {
    optimize_json(env_json, targets_json, anchors, disjoint, resolution, sigma, kappa).map_err(|e| JsValue::from_str(&e))
}
