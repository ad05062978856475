//! Experiment matrix: prediction and tracking RMSE per method, trajectory,
//! wind and seed, with CSV and SVG output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterConfig, LearnedCompensation};
use crate::data::{rollout_windows, CollectConfig, FlightRecord, Rollout};
use crate::dynamics::nominal_derivative;
use crate::error::{Error, Result};
use crate::mpc::{track, tracking_rmse, NominalPrediction, PredictionModel, TrackLog};
use crate::net::{Backbone, ModelParams, NetConfig, OUTPUTS};
use crate::train::{CollocationMode, TrainConfig};
use crate::trajectory::{Trajectory, TrajectoryKind};
use crate::util::par_map;

/// The compared methods, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "Nom")]
    Nom,
    #[serde(rename = "TCN")]
    Tcn,
    #[serde(rename = "PI-MLP")]
    PiMlp,
    #[serde(rename = "PI-TCN")]
    PiTcn,
    #[serde(rename = "PI-WAN")]
    PiWan,
}

/// How a learned method is built and used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MethodSpec {
    pub backbone: Backbone,
    pub collocation: CollocationMode,
    pub adapter: bool,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Nom, Method::Tcn, Method::PiMlp, Method::PiTcn, Method::PiWan];
    pub const LEARNED: [Method; 4] = [Method::Tcn, Method::PiMlp, Method::PiTcn, Method::PiWan];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nom => "Nom",
            Method::Tcn => "TCN",
            Method::PiMlp => "PI-MLP",
            Method::PiTcn => "PI-TCN",
            Method::PiWan => "PI-WAN",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Method::Nom => "nom",
            Method::Tcn => "tcn",
            Method::PiMlp => "pi-mlp",
            Method::PiTcn => "pi-tcn",
            Method::PiWan => "pi-wan",
        }
    }

    /// `None` for the nominal model.
    pub fn spec(self) -> Option<MethodSpec> {
        let (backbone, collocation) = match self {
            Method::Nom => return None,
            Method::Tcn => (Backbone::Tcn, CollocationMode::Off),
            Method::PiMlp => (Backbone::Mlp, CollocationMode::Resampled),
            Method::PiTcn => (Backbone::Tcn, CollocationMode::Fixed),
            Method::PiWan => (Backbone::Tcn, CollocationMode::Resampled),
        };
        Some(MethodSpec {
            backbone,
            collocation,
            adapter: true,
        })
    }

    /// Network config for this method, derived from a base config.
    pub fn net_config(self, base: &NetConfig, seed: u64) -> Option<NetConfig> {
        self.spec().map(|s| NetConfig {
            backbone: s.backbone,
            seed,
            ..base.clone()
        })
    }

    /// Training config for this method; the plain TCN drops the physics term.
    pub fn train_config(self, base: &TrainConfig, seed: u64) -> Option<TrainConfig> {
        self.spec().map(|s| TrainConfig {
            collocation: s.collocation,
            lambda: if s.collocation == CollocationMode::Off { 0.0 } else { base.lambda },
            seed,
            ..base.clone()
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.slug().replace('-', "") == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}` (expected nom, tcn, pi-mlp, pi-tcn or pi-wan)")))
    }
}

/// Nominal-model or learned predictor of the velocity derivative.
#[derive(Clone, Copy)]
pub enum Predictor<'a> {
    Nominal,
    Learned(&'a ModelParams),
}

/// Euclidean RMSE (m/s²) of predicted against true velocity derivatives over
/// every full window of the rollout. The nominal model is scored on the same
/// window ends.
pub fn prediction_rmse(predictor: Predictor<'_>, rollout: &Rollout, window: usize) -> Result<f64> {
    let n = rollout.records.len();
    if n < window || window < 1 {
        return Err(Error::RolloutTooShort { len: n, window });
    }
    let truth: Vec<&FlightRecord> = rollout.records[window - 1..].iter().collect();
    let predictions: Vec<[f64; OUTPUTS]> = match predictor {
        Predictor::Nominal => truth
            .iter()
            .map(|r| nominal_derivative(&r.state, &r.input).map(|d| [d.dv.x, d.dv.y, d.dv.z]))
            .collect::<Result<_>>()?,
        Predictor::Learned(p) => {
            if p.config().window != window {
                return Err(Error::shape(format!("{window}-frame model"), format!("{}-frame model", p.config().window)));
            }
            let set = rollout_windows(rollout, window)?;
            p.forward_batch(&p.norm.normalize_window(&set.features))?
        }
    };
    let sse: f64 = truth
        .iter()
        .zip(&predictions)
        .map(|(r, y)| (Vector3::from(*y) - r.dv_true).norm_squared())
        .sum();
    Ok((sse / truth.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// m/s², on the nominal-MPC rollout of the cell's trajectory and wind.
    PredictionRmse,
    /// m, closed loop.
    TrackingRmse,
}

/// One report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub trajectory: TrajectoryKind,
    pub wind_x: f64,
    pub wind_y: f64,
    pub metric: Metric,
    pub value: f64,
    pub seed: u64,
    /// Set when the cell failed; `value` is NaN then.
    pub error: Option<String>,
}

impl Cell {
    fn key(&self) -> (Method, TrajectoryKind, u64, u64, u64, Metric) {
        (self.method, self.trajectory, self.wind_x.to_bits(), self.wind_y.to_bits(), self.seed, self.metric)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: Method,
    pub trajectory: TrajectoryKind,
    pub wind_x: f64,
    pub wind_y: f64,
    pub seed: u64,
    pub wall_time: f64,
}

/// Reference and flown horizontal paths of one tracking run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathPair {
    pub reference: Vec<[f64; 2]>,
    pub actual: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub cells: Vec<Cell>,
    pub timings: Vec<Timing>,
    pub paths: BTreeMap<(Method, TrajectoryKind, u64), PathPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixSpec {
    pub methods: Vec<Method>,
    pub trajectories: Vec<TrajectoryKind>,
    /// Horizontal winds `(x, y)`, m/s.
    pub winds: Vec<[f64; 2]>,
    pub seeds: Vec<u64>,
    /// Closed-loop duration per cell, s.
    pub duration: f64,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            trajectories: TrajectoryKind::ALL.to_vec(),
            winds: vec![[0.0, 0.0], [2.0, 0.0], [5.0, 0.0], [6.0, 0.0]],
            seeds: vec![0],
            duration: 20.0,
        }
    }
}

impl MatrixSpec {
    pub fn tracking_cells(&self) -> usize {
        self.methods.len() * self.trajectories.len() * self.winds.len() * self.seeds.len()
    }
}

fn path_pair(log: &TrackLog) -> PathPair {
    PathPair {
        reference: log.references.iter().map(|r| [r.p.x, r.p.y]).collect(),
        actual: log.records.iter().map(|r| [r.state.p.x, r.state.p.y]).collect(),
    }
}

fn to_rollout(kind: TrajectoryKind, wind: crate::dynamics::WindField, log: &TrackLog) -> Rollout {
    Rollout {
        trajectory: kind,
        wind,
        records: log
            .records
            .iter()
            .map(|r| FlightRecord {
                t: r.t,
                state: r.state,
                input: r.input,
                dv_true: r.derivative.dv,
            })
            .collect(),
    }
}

/// Run every configured cell. `checkpoints(method, seed)` supplies trained
/// parameters for learned methods; a missing checkpoint fails only its cells.
pub fn run_matrix(
    spec: &MatrixSpec,
    checkpoints: &(dyn Fn(Method, u64) -> Option<ModelParams> + Sync),
    collect: &CollectConfig,
    adapter: &AdapterConfig,
) -> Result<BenchReport> {
    if spec.methods.is_empty() || spec.trajectories.is_empty() || spec.winds.is_empty() || spec.seeds.is_empty() {
        return Err(Error::EmptyReport);
    }
    let window = |p: &ModelParams| p.config().window;

    // Shared nominal rollouts, one per (trajectory, wind).
    let base_jobs: Vec<(TrajectoryKind, [f64; 2])> = spec
        .trajectories
        .iter()
        .flat_map(|&k| spec.winds.iter().map(move |&w| (k, w)))
        .collect();
    let nominal = par_map(&base_jobs, |(kind, w)| {
        let start = Instant::now();
        let r = collect.wind(w[0], w[1]).and_then(|wind| {
            let traj = Trajectory::new(*kind, collect.trajectory);
            let log = track(&traj, &mut NominalPrediction, &wind, &collect.mpc, &collect.weights, spec.duration)?;
            Ok((wind, log))
        });
        (r, start.elapsed().as_secs_f64())
    });

    let mut models: BTreeMap<(Method, u64), Option<ModelParams>> = BTreeMap::new();
    for &m in &spec.methods {
        if m != Method::Nom {
            for &s in &spec.seeds {
                models.insert((m, s), checkpoints(m, s));
            }
        }
    }

    struct Job {
        method: Method,
        base: usize,
        seed: u64,
    }
    let n_base = base_jobs.len();
    let mut jobs = Vec::with_capacity(spec.methods.len() * spec.seeds.len() * n_base);
    for &method in &spec.methods {
        for &seed in &spec.seeds {
            jobs.extend((0..n_base).map(|base| Job { method, base, seed }));
        }
    }

    let results = par_map(&jobs, |job| {
        let kind = base_jobs[job.base].0;
        let (nom, nom_time) = &nominal[job.base];
        let start = Instant::now();
        let outcome: Result<(f64, f64, Option<PathPair>)> = (|| {
            let (wind, nom_log) = nom.as_ref().map_err(|e| Error::Format(e.to_string()))?;
            if job.method == Method::Nom {
                let rollout = to_rollout(kind, *wind, nom_log);
                let pred = prediction_rmse(Predictor::Nominal, &rollout, crate::data::DEFAULT_WINDOW)?;
                return Ok((pred, tracking_rmse(&nom_log.records, &nom_log.references), Some(path_pair(nom_log))));
            }
            let params = models[&(job.method, job.seed)]
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("no checkpoint for {} seed {}", job.method, job.seed)))?;
            let rollout = to_rollout(kind, *wind, nom_log);
            let pred = prediction_rmse(Predictor::Learned(params), &rollout, window(params))?;
            let mut predictor: Box<dyn PredictionModel> = if job.method.spec().is_some_and(|s| s.adapter) {
                Box::new(LearnedCompensation::new(params.clone(), adapter.clone(), collect.mpc.dt)?)
            } else {
                Box::new(NominalPrediction)
            };
            let traj = Trajectory::new(kind, collect.trajectory);
            let log = track(&traj, predictor.as_mut(), wind, &collect.mpc, &collect.weights, spec.duration)?;
            Ok((pred, tracking_rmse(&log.records, &log.references), Some(path_pair(&log))))
        })();
        let mut elapsed = start.elapsed().as_secs_f64();
        if job.method == Method::Nom {
            elapsed += nom_time;
        }
        (outcome, elapsed)
    });

    let mut report = BenchReport::default();
    for (job, (outcome, elapsed)) in jobs.iter().zip(results) {
        let (kind, w) = base_jobs[job.base];
        let cell = |metric, value, error: Option<String>| Cell {
            method: job.method,
            trajectory: kind,
            wind_x: w[0],
            wind_y: w[1],
            metric,
            value,
            seed: job.seed,
            error,
        };
        match outcome {
            Ok((pred, trk, paths)) => {
                report.cells.push(cell(Metric::PredictionRmse, pred, None));
                report.cells.push(cell(Metric::TrackingRmse, trk, None));
                if let Some(p) = paths {
                    // Kept for the largest configured wind only.
                    let largest = spec.winds.iter().map(|w| w[0].hypot(w[1])).fold(0.0, f64::max);
                    if w[0].hypot(w[1]) == largest && job.seed == spec.seeds[0] {
                        report.paths.insert((job.method, kind, job.seed), p);
                    }
                }
            }
            Err(e) => {
                report.cells.push(cell(Metric::PredictionRmse, f64::NAN, Some(e.to_string())));
                report.cells.push(cell(Metric::TrackingRmse, f64::NAN, Some(e.to_string())));
            }
        }
        report.timings.push(Timing {
            method: job.method,
            trajectory: kind,
            wind_x: w[0],
            wind_y: w[1],
            seed: job.seed,
            wall_time: elapsed,
        });
    }
    report.cells.sort_by(|a, b| a.key().partial_cmp(&b.key()).unwrap());
    Ok(report)
}

impl BenchReport {
    pub fn get(&self, method: Method, trajectory: TrajectoryKind, wind: [f64; 2], seed: u64, metric: Metric) -> Option<&Cell> {
        self.cells.iter().find(|c| {
            c.method == method
                && c.trajectory == trajectory
                && c.wind_x == wind[0]
                && c.wind_y == wind[1]
                && c.seed == seed
                && c.metric == metric
        })
    }

    /// Bit-stable CSV of every cell (no timing columns).
    pub fn to_csv(&self) -> Result<String> {
        if self.cells.is_empty() {
            return Err(Error::EmptyReport);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(c).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let cells = r
            .deserialize()
            .collect::<std::result::Result<Vec<Cell>, _>>()
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            cells,
            ..Default::default()
        })
    }

    pub fn timings_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for t in &self.timings {
            w.serialize(t).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Tracking-RMSE heatmap for one trajectory: rows are method × seed,
    /// columns are winds.
    pub fn heatmap_svg(&self, trajectory: TrajectoryKind) -> String {
        let cells: Vec<&Cell> = self
            .cells
            .iter()
            .filter(|c| c.trajectory == trajectory && c.metric == Metric::TrackingRmse)
            .collect();
        let mut rows: Vec<(Method, u64)> = cells.iter().map(|c| (c.method, c.seed)).collect();
        rows.dedup();
        rows.sort();
        rows.dedup();
        let mut cols: Vec<(f64, f64)> = cells.iter().map(|c| (c.wind_x, c.wind_y)).collect();
        cols.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cols.dedup();
        let finite: Vec<f64> = cells.iter().map(|c| c.value).filter(|v| v.is_finite()).collect();
        let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let (cw, ch, left, top) = (90.0, 28.0, 110.0, 50.0);
        let width = left + cw * cols.len() as f64 + 10.0;
        let height = top + ch * rows.len() as f64 + 10.0;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <text x=\"{left}\" y=\"18\" font-weight=\"bold\">{trajectory}: tracking RMSE [m]</text>\n"
        );
        for (j, (wx, wy)) in cols.iter().enumerate() {
            let x = left + cw * j as f64 + cw / 2.0;
            s.push_str(&format!("<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">({wx}, {wy})</text>\n", top - 8.0));
        }
        for (i, (m, seed)) in rows.iter().enumerate() {
            let y = top + ch * i as f64;
            s.push_str(&format!("<text x=\"4\" y=\"{}\">{m} s{seed}</text>\n", y + ch / 2.0 + 4.0));
            for (j, (wx, wy)) in cols.iter().enumerate() {
                let Some(c) = cells
                    .iter()
                    .find(|c| c.method == *m && c.seed == *seed && c.wind_x == *wx && c.wind_y == *wy)
                else {
                    continue;
                };
                let x = left + cw * j as f64;
                let (fill, label) = if c.value.is_finite() {
                    let f = if hi > lo { (c.value - lo) / (hi - lo) } else { 0.0 };
                    (heat_color(f), format!("{:.4}", c.value))
                } else {
                    ("#999999".to_string(), "error".to_string())
                };
                s.push_str(&format!(
                    "<rect class=\"cell\" x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"{fill}\" stroke=\"white\"/>\n\
                     <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0
                ));
            }
        }
        s.push_str("</svg>\n");
        s
    }

    /// Reference and flown paths in the horizontal plane.
    pub fn trajectory_svg(&self, method: Method, trajectory: TrajectoryKind, seed: u64) -> Option<String> {
        self.paths.get(&(method, trajectory, seed)).map(|p| path_svg(&format!("{method} on {trajectory}"), p))
    }

    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("matrix.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("timings.csv"), self.timings_csv()?)?;
        let mut kinds: Vec<TrajectoryKind> = self.cells.iter().map(|c| c.trajectory).collect();
        kinds.sort();
        kinds.dedup();
        for k in kinds {
            std::fs::write(dir.join(format!("heatmap-{}.svg", k.slug())), self.heatmap_svg(k))?;
        }
        for ((m, k, seed), _) in &self.paths {
            if let Some(svg) = self.trajectory_svg(*m, *k, *seed) {
                std::fs::write(dir.join(format!("track-{}-{}.svg", m.slug(), k.slug())), svg)?;
            }
        }
        Ok(())
    }
}

/// White to dark red.
fn heat_color(f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let g = (235.0 * (1.0 - f) + 20.0) as u8;
    let r = (255.0 - 80.0 * f) as u8;
    format!("#{r:02x}{g:02x}{g:02x}")
}

pub fn path_svg(title: &str, p: &PathPair) -> String {
    let all = p.reference.iter().chain(&p.actual);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for q in all {
        x0 = x0.min(q[0]);
        x1 = x1.max(q[0]);
        y0 = y0.min(q[1]);
        y1 = y1.max(q[1]);
    }
    let size = 400.0;
    let margin = 30.0;
    let span = (x1 - x0).max(y1 - y0).max(1e-6);
    let map = |q: &[f64; 2]| {
        (
            margin + (q[0] - x0) / span * size,
            margin + size - (q[1] - y0) / span * size,
        )
    };
    let poly = |pts: &[[f64; 2]]| {
        pts.iter()
            .map(|q| {
                let (x, y) = map(q);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let total = size + 2.0 * margin;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{total}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <text x=\"{margin}\" y=\"18\">{title} (x-y, m)</text>\n\
         <polyline fill=\"none\" stroke=\"#888888\" stroke-dasharray=\"4 3\" points=\"{}\"/>\n\
         <polyline fill=\"none\" stroke=\"#c0392b\" points=\"{}\"/>\n\
         </svg>\n",
        poly(&p.reference),
        poly(&p.actual)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NormStats;
    use crate::dynamics::{ControlInput, State, WindField};

    fn rollout(n: usize) -> Rollout {
        let wind = WindField::horizontal(3.0, 1.0);
        Rollout {
            trajectory: TrajectoryKind::Circle,
            wind,
            records: (0..n)
                .map(|k| {
                    let state = State::hover_at(Vector3::new(k as f64, 0.0, 1.0));
                    let input = ControlInput::new(9.0 + 0.01 * k as f64, 0.0, 0.0, 0.0);
                    let dv = crate::dynamics::plant_derivative(&state, &input, &wind).unwrap().dv;
                    FlightRecord {
                        t: k as f64 * 0.02,
                        state,
                        input,
                        dv_true: dv,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn prediction_rmse_definitions() {
        let r = rollout(40);
        // Labels equal nominal plus drag; remove the drag to make the nominal model exact.
        let mut exact = r.clone();
        for rec in exact.records.iter_mut() {
            rec.dv_true = nominal_derivative(&rec.state, &rec.input).unwrap().dv;
        }
        assert_eq!(prediction_rmse(Predictor::Nominal, &exact, 5).unwrap(), 0.0);
        let mut shifted = exact.clone();
        for rec in shifted.records.iter_mut() {
            rec.dv_true -= Vector3::new(1.0, 1.0, 1.0);
        }
        assert!((prediction_rmse(Predictor::Nominal, &shifted, 5).unwrap() - 3f64.sqrt()).abs() < 1e-12);
        assert!(matches!(prediction_rmse(Predictor::Nominal, &rollout(3), 5), Err(Error::RolloutTooShort { .. })));
    }

    #[test]
    fn learned_predictor_that_matches_labels_scores_zero() {
        // Every label in this rollout is the same, so a constant model is exact.
        let mut r = rollout(30);
        for rec in r.records.iter_mut() {
            rec.dv_true = Vector3::new(0.5, -0.25, 2.0);
        }
        let cfg = NetConfig {
            window: 4,
            tcn_channels: 3,
            dilations: vec![1],
            head: vec![3],
            ..NetConfig::default()
        };
        let n = cfg.layout().total;
        let norm = NormStats {
            target_mean: [0.5, -0.25, 2.0],
            ..NormStats::default()
        };
        let p = ModelParams::from_values(cfg, vec![0.0; n], norm).unwrap();
        assert_eq!(prediction_rmse(Predictor::Learned(&p), &r, 4).unwrap(), 0.0);
        assert!(prediction_rmse(Predictor::Learned(&p), &r, 5).is_err());
    }

    #[test]
    fn method_roster() {
        assert_eq!(Method::ALL.len(), 5);
        assert!(Method::Nom.spec().is_none());
        assert_eq!(Method::PiWan.spec().unwrap().collocation, CollocationMode::Resampled);
        assert_eq!(Method::PiTcn.spec().unwrap().collocation, CollocationMode::Fixed);
        assert_eq!(Method::PiMlp.spec().unwrap().backbone, Backbone::Mlp);
        assert_eq!(Method::Tcn.train_config(&TrainConfig::default(), 1).unwrap().lambda, 0.0);
        for m in Method::ALL {
            assert_eq!(m.slug().parse::<Method>().unwrap(), m);
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("pi-gan".parse::<Method>().is_err());
    }

    fn small_matrix() -> (MatrixSpec, CollectConfig) {
        let spec = MatrixSpec {
            methods: vec![Method::Nom, Method::Tcn],
            trajectories: vec![TrajectoryKind::Circle, TrajectoryKind::WarpedEllipse],
            winds: vec![[0.0, 0.0], [3.0, 0.0]],
            seeds: vec![0],
            duration: 1.0,
        };
        (spec, CollectConfig::default())
    }

    #[test]
    fn matrix_covers_every_cell_and_is_deterministic() {
        let (spec, collect) = small_matrix();
        let none = |_: Method, _: u64| None;
        let report = run_matrix(&spec, &none, &collect, &AdapterConfig::default()).unwrap();
        assert_eq!(report.cells.len(), 2 * spec.tracking_cells());
        // Missing checkpoints become tagged failures, not omissions.
        let failed: Vec<&Cell> = report.cells.iter().filter(|c| c.error.is_some()).collect();
        assert_eq!(failed.len(), 8);
        assert!(failed.iter().all(|c| c.method == Method::Tcn && c.value.is_nan()));

        let again = run_matrix(&spec, &none, &collect, &AdapterConfig::default()).unwrap();
        assert_eq!(report.to_csv().unwrap(), again.to_csv().unwrap());

        // Same metric definition as the closed loop itself.
        let traj = Trajectory::with_defaults(TrajectoryKind::Circle);
        let log = track(&traj, &mut NominalPrediction, &WindField::horizontal(3.0, 0.0), &collect.mpc, &collect.weights, 1.0).unwrap();
        let cell = report.get(Method::Nom, TrajectoryKind::Circle, [3.0, 0.0], 0, Metric::TrackingRmse).unwrap();
        assert!((cell.value - log.rmse).abs() <= 1e-12);
    }

    #[test]
    fn csv_round_trip_and_heatmap() {
        let (spec, collect) = small_matrix();
        let model = ModelParams::init(
            NetConfig {
                tcn_channels: 4,
                head: vec![4],
                ..NetConfig::default()
            },
            NormStats::default(),
        )
        .unwrap();
        let lookup = |_: Method, _: u64| Some(model.clone());
        let report = run_matrix(&spec, &lookup, &collect, &AdapterConfig::default()).unwrap();
        assert!(report.cells.iter().all(|c| c.error.is_none()));
        let csv = report.to_csv().unwrap();
        let back = BenchReport::from_csv(&csv).unwrap();
        assert_eq!(back.cells, report.cells);
        assert_eq!(back.to_csv().unwrap(), csv);

        let rects: usize = spec
            .trajectories
            .iter()
            .map(|k| report.heatmap_svg(*k).matches("class=\"cell\"").count())
            .sum();
        assert_eq!(rects, spec.tracking_cells());

        let dir = tempfile::tempdir().unwrap();
        report.write_all(dir.path()).unwrap();
        assert!(dir.path().join("heatmap-circle.svg").exists());
        assert!(dir.path().join("track-pi-wan-circle.svg").exists() || dir.path().join("track-tcn-circle.svg").exists());
        assert!(matches!(BenchReport::default().to_csv(), Err(Error::EmptyReport)));
    }
}
