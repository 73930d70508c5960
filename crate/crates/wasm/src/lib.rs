//! Browser bindings: a curve evolving in the plane, sphere radii against the
//! closed form, and the inequality suite of a preset body. Every entry point
//! takes and returns JSON text.

use serde::{Deserialize, Serialize};
use starflow_core::body::BodyPreset;
use starflow_core::flow::{run_flow, FlowSpec, Mode, RunOptions};
use starflow_core::geometry::{geometry_from_values, Ambient};
use starflow_core::manifold::{GridSpec, SphereGrid};
use starflow_core::quantities::{classify_body, inequality_suite};
use starflow_core::symfun::CurvatureFunctionSpec;
use std::sync::Arc;
use wasm_bindgen::prelude::*;

/// Caps the work a single browser call can request.
const MAX_FRAMES: usize = 400;
const MAX_STEPS: usize = 200_000;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRequest {
    pub alpha: f64,
    pub beta: f64,
    /// Body preset text, e.g. `bumpy(1.0,0.15,5,3)`.
    pub body: String,
    #[serde(default = "default_points")]
    pub n_points: usize,
    pub t_end: f64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub normalized: bool,
}

fn default_points() -> usize {
    128
}

fn default_frames() -> usize {
    60
}

#[derive(Serialize)]
pub struct CurveFrame {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dgamma_sq_max: f64,
}

#[derive(Serialize)]
pub struct CurveResponse {
    pub termination: String,
    pub steps: usize,
    pub frames: Vec<CurveFrame>,
}

/// Evolves a closed planar curve under `∂_t ρ = u^α κ^{-β} ω` (optionally
/// normalized) and returns roughly `frames` snapshots.
pub fn evolve_curve_impl(request: &str) -> Result<String, String> {
    let req: CurveRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let body: BodyPreset = req.body.parse().map_err(|e: starflow_core::Error| e.to_string())?;
    let frames = req.frames.clamp(2, MAX_FRAMES);
    let spec = FlowSpec {
        ambient: Ambient::Euclidean,
        alpha: req.alpha,
        beta: req.beta,
        f: CurvatureFunctionSpec::Ratio { l: 1, k: 0 },
        mode: if req.normalized { Mode::Normalized } else { Mode::Unnormalized },
        grid: GridSpec::Circle { n_points: req.n_points },
        body,
        t_end: req.t_end,
        safety: 0.5,
        allow_out_of_range: false,
    };
    let grid = SphereGrid::new(spec.grid).map_err(|e| e.to_string())?;
    let dirs: Vec<[f64; 3]> = (0..grid.node_count()).map(|k| grid.direction(k)).collect();
    let spacing = req.t_end / (frames - 1) as f64;
    let mut out = Vec::new();
    let mut next_t = 0.0;
    let options = RunOptions { cadence: 1, max_steps: MAX_STEPS, seed: 0, stop_on_convergence: true };
    let outcome = run_flow(&spec, options, |state, report| {
        if state.t >= next_t || state.t >= req.t_end {
            let rho = state.rho();
            out.push(CurveFrame {
                t: state.t,
                x: rho.iter().zip(&dirs).map(|(r, d)| r * d[0]).collect(),
                y: rho.iter().zip(&dirs).map(|(r, d)| r * d[1]).collect(),
                dgamma_sq_max: report.dgamma_sq_max,
            });
            next_t += spacing;
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let response = CurveResponse {
        termination: format!("{:?}", outcome.termination),
        steps: outcome.final_state.step,
        frames: out,
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct RadiusTrajectory {
    pub t: Vec<f64>,
    pub numeric: Vec<f64>,
    pub exact: Vec<f64>,
}

/// Radius of a round sphere of initial radius `r0` under the unnormalized
/// flow with `f = σ_1`, sampled at `samples` times, next to the solution of
/// `r' = 2^{-β} r^{α+β}`.
pub fn sphere_radius_trajectory_impl(alpha: f64, beta: f64, r0: f64, t_end: f64, samples: usize) -> Result<String, String> {
    let samples = samples.clamp(2, MAX_FRAMES);
    let spec = FlowSpec {
        ambient: Ambient::Euclidean,
        alpha,
        beta,
        f: CurvatureFunctionSpec::Ratio { l: 1, k: 0 },
        mode: Mode::Unnormalized,
        grid: GridSpec::Sphere { n_theta: 16, n_phi: 32 },
        body: BodyPreset::Sphere { r: r0 },
        t_end,
        safety: 0.5,
        allow_out_of_range: false,
    };
    let exact = |t: f64| {
        let c = 2f64.powf(-beta);
        let gap = 1.0 - alpha - beta;
        if gap.abs() < 1e-12 {
            r0 * (c * t).exp()
        } else {
            (r0.powf(gap) + gap * c * t).powf(1.0 / gap)
        }
    };
    let spacing = t_end / (samples - 1) as f64;
    let mut traj = RadiusTrajectory { t: Vec::new(), numeric: Vec::new(), exact: Vec::new() };
    let mut next_t = 0.0;
    let options = RunOptions { cadence: 1, max_steps: MAX_STEPS, seed: 0, stop_on_convergence: false };
    run_flow(&spec, options, |state, report| {
        if state.t >= next_t || state.t >= t_end {
            traj.t.push(state.t);
            traj.numeric.push(0.5 * (report.rho_min + report.rho_max));
            traj.exact.push(exact(state.t));
            next_t += spacing;
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    serde_json::to_string(&traj).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct BodyReport {
    convex: bool,
    k_convex: usize,
    inequalities: Vec<starflow_core::quantities::InequalityReport>,
}

/// Inequality suite of a preset surface in R³ at `n_theta × 2 n_theta`.
pub fn body_inequalities_impl(body: &str, n_theta: usize, iotas: &str) -> Result<String, String> {
    let preset: BodyPreset = body.parse().map_err(|e: starflow_core::Error| e.to_string())?;
    let iotas: Vec<f64> = serde_json::from_str(iotas).map_err(|e| e.to_string())?;
    let grid = Arc::new(SphereGrid::new(GridSpec::Sphere { n_theta, n_phi: 2 * n_theta }).map_err(|e| e.to_string())?);
    let rho = preset.rho_values(&grid).map_err(|e| e.to_string())?;
    let fields = geometry_from_values(&grid, &rho, Ambient::Euclidean).map_err(|e| e.to_string())?;
    let class = classify_body(&fields);
    let report = BodyReport {
        convex: class.convex,
        k_convex: class.k_convex,
        inequalities: inequality_suite(&fields, &iotas).map_err(|e| e.to_string())?,
    };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn evolve_curve(request: &str) -> Result<String, JsValue> {
    evolve_curve_impl(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sphere_radius_trajectory(alpha: f64, beta: f64, r0: f64, t_end: f64, samples: usize) -> Result<String, JsValue> {
    sphere_radius_trajectory_impl(alpha, beta, r0, t_end, samples).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn body_inequalities(body: &str, n_theta: usize, iotas: &str) -> Result<String, JsValue> {
    body_inequalities_impl(body, n_theta, iotas).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_frames_cover_the_run() {
        let req = r#"{"alpha":0.0,"beta":1.0,"body":"bumpy(1.0,0.1,3,2)","n_points":64,"t_end":0.5,"frames":6}"#;
        let v: serde_json::Value = serde_json::from_str(&evolve_curve_impl(req).unwrap()).unwrap();
        let frames = v["frames"].as_array().unwrap();
        assert!(frames.len() >= 6);
        assert_eq!(frames[0]["x"].as_array().unwrap().len(), 64);
        assert_eq!(frames.last().unwrap()["t"], 0.5);
        assert!(evolve_curve_impl(r#"{"alpha":0.0}"#).is_err());
    }

    #[test]
    fn radius_matches_closed_form() {
        let v: serde_json::Value = serde_json::from_str(&sphere_radius_trajectory_impl(-0.5, 1.0, 1.3, 0.5, 5).unwrap()).unwrap();
        let num = v["numeric"].as_array().unwrap();
        let ex = v["exact"].as_array().unwrap();
        for (a, b) in num.iter().zip(ex) {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            assert!((a - b).abs() <= 1e-6 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn body_report_lists_margins() {
        let v: serde_json::Value = serde_json::from_str(&body_inequalities_impl("sphere(2.0)", 16, "[1.0, 2.0]").unwrap()).unwrap();
        assert_eq!(v["convex"], true);
        for r in v["inequalities"].as_array().unwrap() {
            if r["applicable"] == true {
                assert!(r["margin"].as_f64().unwrap().abs() < 1e-8);
            }
        }
        assert!(body_inequalities_impl("cube(1)", 16, "[]").is_err());
    }
}
