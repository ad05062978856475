//! Browser bindings for three small demos: reference paths, closed-loop
//! tracking under wind, and the drag acceleration felt at a given velocity.
//!
//! Every operation has a plain Rust form (tested natively) and a thin
//! `wasm_bindgen` wrapper taking numbers and strings.

use nalgebra::Vector3;
use quadwind::dynamics::WindField;
use quadwind::mpc::{track, MpcConfig, MpcWeights, NominalPrediction, OracleDisturbance, PredictionModel};
use quadwind::trajectory::{Trajectory, TrajectoryKind, TrajectoryParams};
use wasm_bindgen::prelude::*;

/// Longest flight the page may request, s.
pub const MAX_DURATION: f64 = 20.0;

/// Which disturbance model the controller predicts with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Compensation {
    Nominal,
    /// The true drag at the measured state, frozen over the horizon.
    Oracle,
}

impl std::str::FromStr for Compensation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nominal" => Ok(Compensation::Nominal),
            "oracle" => Ok(Compensation::Oracle),
            other => Err(format!("unknown compensation `{other}`")),
        }
    }
}

/// Result of one tracking run, positions as flat `x, y` pairs.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Flight {
    rmse: f64,
    max_error: f64,
    actual: Vec<f64>,
    reference: Vec<f64>,
}

#[wasm_bindgen]
impl Flight {
    #[wasm_bindgen(getter)]
    pub fn rmse(&self) -> f64 {
        self.rmse
    }

    #[wasm_bindgen(getter, js_name = maxError)]
    pub fn max_error(&self) -> f64 {
        self.max_error
    }

    #[wasm_bindgen(getter)]
    pub fn actual(&self) -> Vec<f64> {
        self.actual.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }
}

fn check_duration(duration: f64) -> Result<(), String> {
    if !(duration > 0.0 && duration <= MAX_DURATION) {
        return Err(format!("duration must be in (0, {MAX_DURATION}] s, got {duration}"));
    }
    Ok(())
}

/// Horizontal reference path sampled every `dt` seconds.
pub fn reference_path(kind: TrajectoryKind, duration: f64, dt: f64) -> Result<Vec<[f64; 3]>, String> {
    check_duration(duration)?;
    if !(dt > 0.0) {
        return Err(format!("dt must be > 0, got {dt}"));
    }
    let traj = Trajectory::new(kind, TrajectoryParams::default());
    let n = (duration / dt).round() as usize;
    (0..=n)
        .map(|k| {
            let p = traj.sample(k as f64 * dt).map_err(|e| e.to_string())?.p;
            Ok([p.x, p.y, p.z])
        })
        .collect()
}

/// Closed-loop MPC flight of `kind` in a horizontal wind.
pub fn fly(kind: TrajectoryKind, wind: [f64; 2], duration: f64, compensation: Compensation) -> Result<Flight, String> {
    check_duration(duration)?;
    let field = WindField::new(Vector3::new(wind[0], wind[1], 0.0), Vector3::from(WindField::DEFAULT_DRAG))
        .map_err(|e| e.to_string())?;
    let mut predictor: Box<dyn PredictionModel> = match compensation {
        Compensation::Nominal => Box::new(NominalPrediction),
        Compensation::Oracle => Box::new(OracleDisturbance {
            wind: field,
            gains: Vector3::repeat(1.0),
        }),
    };
    let traj = Trajectory::new(kind, TrajectoryParams::default());
    let log = track(&traj, predictor.as_mut(), &field, &MpcConfig::default(), &MpcWeights::default(), duration)
        .map_err(|e| e.to_string())?;
    let mut flight = Flight {
        rmse: log.rmse,
        max_error: 0.0,
        actual: Vec::with_capacity(2 * log.records.len()),
        reference: Vec::with_capacity(2 * log.records.len()),
    };
    for (r, p) in log.records.iter().zip(&log.references) {
        flight.max_error = flight.max_error.max((r.state.p - p.p).norm());
        flight.actual.extend_from_slice(&[r.state.p.x, r.state.p.y]);
        flight.reference.extend_from_slice(&[p.p.x, p.p.y]);
    }
    Ok(flight)
}

/// Drag acceleration `−D (v − v_w)` for body velocity `v` in wind `v_w`.
pub fn drag(velocity: [f64; 3], wind: [f64; 2]) -> Result<[f64; 3], String> {
    if velocity.iter().chain(&wind).any(|v| !v.is_finite()) {
        return Err("velocity and wind must be finite".into());
    }
    let a = WindField::horizontal(wind[0], wind[1]).drag_acceleration(&Vector3::from(velocity));
    Ok([a.x, a.y, a.z])
}

fn kind(name: &str) -> Result<TrajectoryKind, JsError> {
    name.parse().map_err(|e: quadwind::Error| JsError::new(&e.to_string()))
}

/// Trajectory slugs, in display order.
#[wasm_bindgen(js_name = trajectoryNames)]
pub fn trajectory_names() -> Vec<String> {
    TrajectoryKind::ALL.iter().map(|k| k.slug().to_string()).collect()
}

/// Flat `x, y` pairs of the reference path.
#[wasm_bindgen(js_name = referencePath)]
pub fn reference_path_js(name: &str, duration: f64) -> Result<Vec<f64>, JsError> {
    let pts = reference_path(kind(name)?, duration, 0.05).map_err(|e| JsError::new(&e))?;
    Ok(pts.iter().flat_map(|p| [p[0], p[1]]).collect())
}

#[wasm_bindgen(js_name = fly)]
pub fn fly_js(name: &str, wind_x: f64, wind_y: f64, duration: f64, compensation: &str) -> Result<Flight, JsError> {
    let comp: Compensation = compensation.parse().map_err(|e: String| JsError::new(&e))?;
    fly(kind(name)?, [wind_x, wind_y], duration, comp).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = drag)]
pub fn drag_js(vx: f64, vy: f64, vz: f64, wind_x: f64, wind_y: f64) -> Result<Vec<f64>, JsError> {
    drag([vx, vy, vz], [wind_x, wind_y]).map(|a| a.to_vec()).map_err(|e| JsError::new(&e))
}
