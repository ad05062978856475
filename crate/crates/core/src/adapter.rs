//! History-window disturbance estimate and the corrected prediction model
//! handed to the MPC.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::data::FlightRecord;
use crate::dynamics::{nominal_derivative, ControlInput, State};
use crate::error::{Error, Result};
use crate::mpc::{PredictionModel, QuadrotorModel};
use crate::net::{ModelParams, FEATURES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterConfig {
    /// Number of recent steps `N_T` averaged into the estimate.
    pub history: usize,
    /// Per-axis gains `Λ` on the velocity-derivative correction.
    pub gains: [f64; 3],
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            history: 10,
            gains: [0.8; 3],
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self, window: usize) -> Result<()> {
        if self.history < 1 || self.history > window {
            return Err(Error::InvalidArgument(format!(
                "adapter.history must be in [1, {window}], got {}",
                self.history
            )));
        }
        if let Some(g) = self.gains.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::InvalidArgument(format!("adapter.gains must be in [0, 1], got {g}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryFrame {
    pub t: f64,
    pub state: State,
    pub input: ControlInput,
}

impl HistoryFrame {
    fn features(&self) -> [f64; FEATURES] {
        FlightRecord {
            t: self.t,
            state: self.state,
            input: self.input,
            dv_true: Vector3::zeros(),
        }
        .features()
    }
}

/// The most recent applied `(state, input)` pairs, contiguous at `dt`.
///
/// Holds `T + N_T - 1` frames: enough for a full `T`-frame window ending at
/// each of the last `N_T` steps.
#[derive(Clone, Debug)]
pub struct ControlHistory {
    window: usize,
    steps: usize,
    dt: f64,
    frames: VecDeque<HistoryFrame>,
}

impl ControlHistory {
    pub fn new(window: usize, steps: usize, dt: f64) -> Result<Self> {
        if window < 1 || steps < 1 || !(dt > 0.0) {
            return Err(Error::InvalidArgument("history needs window >= 1, steps >= 1, dt > 0".into()));
        }
        Ok(Self {
            window,
            steps,
            dt,
            frames: VecDeque::with_capacity(window + steps - 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.window + self.steps - 1
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.frames.len() == self.capacity()
    }

    pub fn frames(&self) -> impl Iterator<Item = &HistoryFrame> {
        self.frames.iter()
    }

    /// Append a frame; its time must follow the previous one by `dt`.
    pub fn push(&mut self, t: f64, state: State, input: ControlInput) -> Result<()> {
        if let Some(last) = self.frames.back() {
            if ((t - last.t) - self.dt).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "history frames must be {} s apart, got {} after {}",
                    self.dt, t, last.t
                )));
            }
        }
        if self.frames.len() == self.capacity() {
            self.frames.pop_front();
        }
        self.frames.push_back(HistoryFrame { t, state, input });
        Ok(())
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    /// Raw frame-major window of `T` frames ending at frame `end`.
    fn window_ending(&self, end: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.window * FEATURES);
        for f in self.frames.range(end + 1 - self.window..=end) {
            out.extend_from_slice(&f.features());
        }
        out
    }
}

/// Learned minus nominal velocity derivative at the window's final frame.
fn residual(params: &ModelParams, window: &[f64], last: &HistoryFrame) -> Result<Vector3<f64>> {
    let pred = params.predict(window)?;
    let nominal = nominal_derivative(&last.state, &last.input)?.dv;
    Ok(Vector3::from(pred) - nominal)
}

fn mean<'a>(values: impl ExactSizeIterator<Item = &'a Vector3<f64>>) -> Vector3<f64> {
    let n = values.len() as f64;
    values.fold(Vector3::zeros(), |acc, v| acc + v) / n
}

/// Mean over the last `N_T` steps of (learned − nominal) velocity derivative.
pub fn estimate(params: &ModelParams, hist: &ControlHistory, cfg: &AdapterConfig) -> Result<Vector3<f64>> {
    let window = params.config().window;
    let need = window + cfg.history - 1;
    if hist.window != window || hist.len() < need {
        return Err(Error::HistoryNotWarm {
            have: hist.len(),
            need,
        });
    }
    let n = hist.len();
    let residuals = (n - cfg.history..n)
        .map(|end| residual(params, &hist.window_ending(end), &hist.frames[end]))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(residuals.iter()))
}

/// Nominal RK4 model with `Λ ∘ f_w` added to the velocity derivative,
/// `f_w` frozen at its current value.
pub fn corrected_dynamics(params: &ModelParams, hist: &ControlHistory, cfg: &AdapterConfig) -> Result<QuadrotorModel> {
    let fw = estimate(params, hist, cfg)?;
    Ok(QuadrotorModel::corrected(gain(cfg, &fw)))
}

fn gain(cfg: &AdapterConfig, fw: &Vector3<f64>) -> Vector3<f64> {
    Vector3::from(cfg.gains).component_mul(fw)
}

/// Closed-loop use of the learned model: nominal until the history is warm,
/// then the corrected model. Each step's residual is computed once, when its
/// input is applied, and reused for the next `N_T` estimates.
#[derive(Clone, Debug)]
pub struct LearnedCompensation {
    params: ModelParams,
    cfg: AdapterConfig,
    history: ControlHistory,
    residuals: VecDeque<Vector3<f64>>,
    last_estimate: Option<Vector3<f64>>,
}

impl LearnedCompensation {
    pub fn new(params: ModelParams, cfg: AdapterConfig, dt: f64) -> Result<Self> {
        let window = params.config().window;
        cfg.validate(window)?;
        let history = ControlHistory::new(window, cfg.history, dt)?;
        Ok(Self {
            params,
            cfg,
            history,
            residuals: VecDeque::new(),
            last_estimate: None,
        })
    }

    pub fn history(&self) -> &ControlHistory {
        &self.history
    }

    /// `f_w` used by the most recent solve, if the history was warm.
    pub fn last_estimate(&self) -> Option<Vector3<f64>> {
        self.last_estimate
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl PredictionModel for LearnedCompensation {
    fn model_for_step(&mut self, _t: f64, _x: &State) -> Result<QuadrotorModel> {
        if self.residuals.len() < self.cfg.history {
            self.last_estimate = None;
            return Ok(QuadrotorModel::nominal());
        }
        let fw = mean(self.residuals.iter());
        self.last_estimate = Some(fw);
        Ok(QuadrotorModel::corrected(gain(&self.cfg, &fw)))
    }

    fn applied(&mut self, t: f64, x: &State, u: &ControlInput) -> Result<()> {
        self.history.push(t, *x, *u)?;
        let n = self.history.len();
        if n >= self.history.window {
            let r = residual(&self.params, &self.history.window_ending(n - 1), &self.history.frames[n - 1])?;
            if self.residuals.len() == self.cfg.history {
                self.residuals.pop_front();
            }
            self.residuals.push_back(r);
        }
        Ok(())
    }
}
