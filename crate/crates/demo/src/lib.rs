//! Browser bindings: synthesize the bundled design, plot the error-channel
//! frequency response and run supervised simulations.
//!
//! Every entry point takes and returns JSON strings; the page keeps the
//! artifacts returned by [`synthesize`] and passes them back.

use barrier_core::artifact::{BarrierPairArtifact, EstimatorArtifact};
use barrier_core::config::ProjectConfig;
use barrier_core::estimator::design_bz;
use barrier_core::sim::{freq_response_ge, log_grid, run, worst_sine, Disturbance, Trapezoid};
use barrier_core::synthesis::{synthesize as synthesize_pair, verify_barrier_pair};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

pub const BUNDLED_CONFIG: &str = include_str!("../../../configs/mass_spring.toml");

#[derive(Serialize, Deserialize)]
pub struct Design {
    pub pair: BarrierPairArtifact,
    pub estimator: EstimatorArtifact,
    pub f_e: f64,
    pub peak: f64,
}

#[derive(Serialize)]
pub struct FrequencyResponse {
    pub f_hz: Vec<f64>,
    pub magnitude: Vec<f64>,
}

#[derive(Deserialize)]
pub struct SimRequest {
    pub delta_true: f64,
    /// Disturbance amplitude as a fraction of `w̄`.
    pub disturbance_scale: f64,
    /// Peak of the trapezoidal position reference.
    pub reference_peak: f64,
    pub duration: f64,
}

#[derive(Serialize, Default)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub velocity: Vec<f64>,
    pub position: Vec<f64>,
    pub u: Vec<f64>,
    pub mode: Vec<u8>,
    pub b: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub violations: usize,
    pub engagements: usize,
    pub releases: usize,
    pub max_bound_gap: f64,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn load(config: &str) -> Result<ProjectConfig, String> {
    let text = if config.trim().is_empty() {
        BUNDLED_CONFIG
    } else {
        config
    };
    ProjectConfig::from_toml_str(text).map_err(err)
}

pub fn synthesize_json(config: &str) -> Result<String, String> {
    let cfg = load(config)?;
    let plant = cfg.plant().map_err(err)?;
    let opts = cfg.synthesis_options();
    let pair = synthesize_pair(&plant, &cfg.safety, &opts).map_err(err)?;
    let report = verify_barrier_pair(&plant, &cfg.safety, &pair, opts.verify_tol).map_err(err)?;
    let design = design_bz(&pair.x, plant.w_bar, &cfg.estimator_options()).map_err(err)?;
    let (f_e, _) = worst_sine(
        &pair.x,
        &design,
        plant.w_bar,
        (cfg.freqresp.f_min, cfg.freqresp.f_max),
    )
    .map_err(err)?;
    let peak = freq_response_ge(&pair.x, &design, &[f_e])[0];
    serde_json::to_string(&Design {
        pair: BarrierPairArtifact::new(&plant, &pair, Some(&report)),
        estimator: EstimatorArtifact::new(&plant, &design),
        f_e,
        peak,
    })
    .map_err(err)
}

pub fn frequency_response_json(
    config: &str,
    design: &str,
    f_min: f64,
    f_max: f64,
) -> Result<String, String> {
    let cfg = load(config)?;
    let plant = cfg.plant().map_err(err)?;
    let d: Design = serde_json::from_str(design).map_err(err)?;
    let pair = d.pair.to_pair(&plant).map_err(err)?;
    let est = d.estimator.to_design(&plant).map_err(err)?;
    if !(f_min > 0.0 && f_max > f_min) {
        return Err("frequency range must satisfy 0 < f_min < f_max".into());
    }
    let f_hz = log_grid(f_min, f_max, 50);
    let magnitude = freq_response_ge(&pair.x, &est, &f_hz);
    serde_json::to_string(&FrequencyResponse { f_hz, magnitude }).map_err(err)
}

pub fn simulate_json(config: &str, design: &str, request: &str) -> Result<String, String> {
    let cfg = load(config)?;
    let plant = cfg.plant().map_err(err)?;
    let d: Design = serde_json::from_str(design).map_err(err)?;
    let req: SimRequest = serde_json::from_str(request).map_err(err)?;
    let pair = d.pair.to_pair(&plant).map_err(err)?;
    let est = d.estimator.to_design(&plant).map_err(err)?;
    let name = if cfg.scenarios.contains_key("main") {
        "main".to_string()
    } else {
        cfg.scenarios
            .keys()
            .next()
            .cloned()
            .ok_or("config has no scenarios")?
    };
    let mut sc = cfg.scenario(&name, &pair, &est).map_err(err)?;
    sc.delta_true = vec![req.delta_true; plant.n_p()];
    sc.disturbance = Disturbance::Sinusoid {
        amplitude: plant.w_bar * req.disturbance_scale.clamp(0.0, 1.0),
        frequency_hz: d.f_e,
        phase: 0.0,
    };
    sc.reference = Trapezoid {
        levels: vec![0.0, req.reference_peak, 0.0],
        ..Trapezoid::default()
    };
    sc.duration = req.duration;
    let trace = run(&sc).map_err(err)?;

    // Keep roughly 2000 points for plotting.
    let stride = (trace.samples.len() / 2000).max(1);
    let n = plant.n;
    let mut out = SimResult {
        violations: trace.summary.violations(),
        engagements: trace.summary.engagements,
        releases: trace.summary.releases,
        max_bound_gap: trace.summary.max_bound_gap,
        ..Default::default()
    };
    for s in trace.samples.iter().step_by(stride) {
        out.t.push(s.t);
        out.velocity.push(s.x_p[0]);
        out.position.push(s.x_p[n - 1]);
        out.u.push(s.u);
        out.mode.push(s.mode.code());
        out.b.push(s.b);
        out.b_bar.push(s.b_bar);
    }
    serde_json::to_string(&out).map_err(err)
}

#[wasm_bindgen]
pub fn bundled_config() -> String {
    BUNDLED_CONFIG.to_string()
}

/// Synthesizes the barrier pair and estimator; an empty config uses the
/// bundled mass-spring example.
#[wasm_bindgen]
pub fn synthesize(config: &str) -> Result<String, JsValue> {
    synthesize_json(config).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn frequency_response(
    config: &str,
    design: &str,
    f_min: f64,
    f_max: f64,
) -> Result<String, JsValue> {
    frequency_response_json(config, design, f_min, f_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(config: &str, design: &str, request: &str) -> Result<String, JsValue> {
    simulate_json(config, design, request).map_err(|e| JsValue::from_str(&e))
}
