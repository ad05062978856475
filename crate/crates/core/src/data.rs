//! Flight-data collection with the nominal MPC, windowing into training
//! samples, and per-channel normalization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{plant_derivative, ControlInput, State, WindField};
use crate::error::{Error, Result};
use crate::mpc::{track, MpcConfig, MpcWeights, NominalPrediction};
use crate::net::{FEATURES, OUTPUTS};
use crate::trajectory::{Trajectory, TrajectoryKind, TrajectoryParams};
use crate::util::par_map;

/// Default history length, frames.
pub const DEFAULT_WINDOW: usize = 20;
/// Columns of one stored record.
pub const COLUMNS: [&str; 18] = [
    "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "thrust", "wx", "wy", "wz",
    "dvx", "dvy", "dvz",
];
const MAGIC: &[u8; 8] = b"QWDATA\0\0";
const VERSION: u32 = 1;
const STD_FLOOR: f64 = 1e-6;

/// One sample of a rollout with its true velocity derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlightRecord {
    pub t: f64,
    pub state: State,
    pub input: ControlInput,
    pub dv_true: Vector3<f64>,
}

impl FlightRecord {
    fn to_row(self) -> [f64; 18] {
        let mut row = [0.0; 18];
        row[0] = self.t;
        row[1..11].copy_from_slice(&self.state.to_array());
        row[11..15].copy_from_slice(&self.input.to_array());
        row[15..18].copy_from_slice(self.dv_true.as_slice());
        row
    }

    fn from_row(row: &[f64]) -> Self {
        Self {
            t: row[0],
            state: State::from_slice(&row[1..11]),
            input: ControlInput::from_slice(&row[11..15]),
            dv_true: Vector3::new(row[15], row[16], row[17]),
        }
    }

    /// The 11 network channels `(q, v, u)` of this frame.
    pub fn features(&self) -> [f64; FEATURES] {
        let q = self.state.q;
        let v = self.state.v;
        let u = self.input.to_array();
        [q.w, q.x, q.y, q.z, v.x, v.y, v.z, u[0], u[1], u[2], u[3]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub trajectory: TrajectoryKind,
    pub wind: WindField,
    pub records: Vec<FlightRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    pub seed: u64,
    pub rollouts: Vec<Rollout>,
}

impl Dataset {
    pub fn record_count(&self) -> usize {
        self.rollouts.iter().map(|r| r.records.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    /// Rollout length, s.
    pub duration: f64,
    pub seed: u64,
    pub drag: [f64; 3],
    pub trajectory: TrajectoryParams,
    pub mpc: MpcConfig,
    pub weights: MpcWeights,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            duration: 20.0,
            seed: 0,
            drag: WindField::DEFAULT_DRAG,
            trajectory: TrajectoryParams::default(),
            mpc: MpcConfig::default(),
            weights: MpcWeights::default(),
        }
    }
}

impl CollectConfig {
    pub fn wind(&self, wind_x: f64, wind_y: f64) -> Result<WindField> {
        WindField::new(Vector3::new(wind_x, wind_y, 0.0), Vector3::from(self.drag))
    }
}

/// Horizontal wind grid the training set is drawn from.
pub fn training_wind_grid() -> Vec<(f64, f64)> {
    let speeds = [0.0, 2.0, 4.0];
    speeds
        .iter()
        .flat_map(|&x| speeds.iter().map(move |&y| (x, y)))
        .collect()
}

/// Default training cells: every training trajectory paired with `per_kind`
/// winds drawn without replacement from [`training_wind_grid`].
pub fn training_cells(seed: u64, per_kind: usize) -> Vec<(TrajectoryKind, (f64, f64))> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = training_wind_grid();
    let mut cells = Vec::new();
    for kind in TrajectoryKind::TRAINING {
        let mut winds = grid.clone();
        winds.shuffle(&mut rng);
        winds.truncate(per_kind);
        winds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cells.extend(winds.into_iter().map(|w| (kind, w)));
    }
    cells
}

/// Fly one nominal-MPC rollout and record the true plant derivatives.
pub fn collect_rollout(kind: TrajectoryKind, wind: &WindField, cfg: &CollectConfig) -> Result<Rollout> {
    let traj = Trajectory::new(kind, cfg.trajectory);
    let log = track(&traj, &mut NominalPrediction, wind, &cfg.mpc, &cfg.weights, cfg.duration)
        .map_err(|e| Error::InCell {
            trajectory: kind,
            wind_x: wind.velocity.x,
            wind_y: wind.velocity.y,
            source: Box::new(e),
        })?;
    let records = log
        .records
        .iter()
        .map(|r| FlightRecord {
            t: r.t,
            state: r.state,
            input: r.input,
            dv_true: r.derivative.dv,
        })
        .collect();
    Ok(Rollout {
        trajectory: kind,
        wind: *wind,
        records,
    })
}

/// One rollout per listed cell, in order. Cells run in parallel.
pub fn collect_cells(cells: &[(TrajectoryKind, (f64, f64))], cfg: &CollectConfig) -> Result<Dataset> {
    cfg.trajectory.validate()?;
    let winds: Vec<WindField> = cells
        .iter()
        .map(|(_, (x, y))| cfg.wind(*x, *y))
        .collect::<Result<_>>()?;
    let jobs: Vec<(TrajectoryKind, WindField)> = cells.iter().map(|c| c.0).zip(winds).collect();
    let rollouts = par_map(&jobs, |(kind, wind)| collect_rollout(*kind, wind, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        dt: cfg.mpc.dt,
        seed: cfg.seed,
        rollouts,
    })
}

/// Every trajectory against every wind.
pub fn collect(trajectories: &[TrajectoryKind], winds: &[(f64, f64)], cfg: &CollectConfig) -> Result<Dataset> {
    let cells: Vec<_> = trajectories
        .iter()
        .flat_map(|&k| winds.iter().map(move |&w| (k, w)))
        .collect();
    collect_cells(&cells, cfg)
}

/// Largest deviation between stored labels and the plant recomputed from
/// the stored state, input and wind.
pub fn label_error(dataset: &Dataset) -> Result<f64> {
    let mut worst = 0.0f64;
    for r in &dataset.rollouts {
        for rec in &r.records {
            let d = plant_derivative(&rec.state, &rec.input, &r.wind)?;
            worst = worst.max((d.dv - rec.dv_true).amax());
        }
    }
    Ok(worst)
}

/// Where a window came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WindowTag {
    pub rollout: usize,
    /// Index of the window's final frame within its rollout.
    pub end: usize,
}

/// Windows stored frame-major: window `i`, frame `j`, channel `c` lives at
/// `features[(i * T + j) * 11 + c]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowSet {
    pub window: usize,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    pub tags: Vec<WindowTag>,
}

impl WindowSet {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.window * FEATURES
    }

    pub fn window_features(&self, i: usize) -> &[f64] {
        &self.features[i * self.stride()..(i + 1) * self.stride()]
    }

    pub fn target(&self, i: usize) -> [f64; OUTPUTS] {
        let t = &self.targets[i * OUTPUTS..(i + 1) * OUTPUTS];
        [t[0], t[1], t[2]]
    }

    pub fn push(&mut self, features: &[f64], target: [f64; OUTPUTS], tag: WindowTag) {
        debug_assert_eq!(features.len(), self.stride());
        self.features.extend_from_slice(features);
        self.targets.extend_from_slice(&target);
        self.tags.push(tag);
    }

    /// The listed windows, in the listed order.
    pub fn select(&self, indices: &[usize]) -> WindowSet {
        let mut out = WindowSet::new(self.window);
        for &i in indices {
            out.push(self.window_features(i), self.target(i), self.tags[i]);
        }
        out
    }
}

fn push_rollout_windows(set: &mut WindowSet, rollout_index: usize, rollout: &Rollout) -> Result<()> {
    let t = set.window;
    let n = rollout.records.len();
    if n < t {
        return Err(Error::RolloutTooShort { len: n, window: t });
    }
    let frames: Vec<[f64; FEATURES]> = rollout.records.iter().map(FlightRecord::features).collect();
    for end in t - 1..n {
        for f in &frames[end + 1 - t..=end] {
            set.features.extend_from_slice(f);
        }
        let dv = rollout.records[end].dv_true;
        set.targets.extend_from_slice(&[dv.x, dv.y, dv.z]);
        set.tags.push(WindowTag {
            rollout: rollout_index,
            end,
        });
    }
    Ok(())
}

/// Stride-1 windows of `window` frames from every rollout, for training.
/// Rollouts of held-out trajectory kinds are refused.
pub fn windowize(dataset: &Dataset, window: usize) -> Result<WindowSet> {
    if window < 1 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    let mut set = WindowSet::new(window);
    for (i, r) in dataset.rollouts.iter().enumerate() {
        if r.trajectory.is_unseen() {
            return Err(Error::UnseenTrajectory(r.trajectory));
        }
        push_rollout_windows(&mut set, i, r)?;
    }
    Ok(set)
}

/// Windows of a single rollout of any kind, for evaluation.
pub fn rollout_windows(rollout: &Rollout, window: usize) -> Result<WindowSet> {
    if window < 1 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    let mut set = WindowSet::new(window);
    push_rollout_windows(&mut set, 0, rollout)?;
    Ok(set)
}

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub feature_mean: [f64; FEATURES],
    pub feature_std: [f64; FEATURES],
    pub target_mean: [f64; OUTPUTS],
    pub target_std: [f64; OUTPUTS],
}

impl Default for NormStats {
    /// The identity transform.
    fn default() -> Self {
        Self {
            feature_mean: [0.0; FEATURES],
            feature_std: [1.0; FEATURES],
            target_mean: [0.0; OUTPUTS],
            target_std: [1.0; OUTPUTS],
        }
    }
}

fn mean_std<const N: usize>(data: &[f64]) -> ([f64; N], [f64; N]) {
    let rows = (data.len() / N) as f64;
    let mut mean = [0.0; N];
    for row in data.chunks(N) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    // One correction pass absorbs the rounding of the first.
    let mut shift = [0.0; N];
    for row in data.chunks(N) {
        for ((s, v), m) in shift.iter_mut().zip(row).zip(&mean) {
            *s += v - m;
        }
    }
    for (m, s) in mean.iter_mut().zip(shift) {
        *m += s / rows;
    }
    let mut var = [0.0; N];
    for row in data.chunks(N) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.map(|s| (s / rows).sqrt().max(STD_FLOOR));
    (mean, std)
}

/// Smallest standard deviation per feature channel once physical floors are
/// applied: attitude, velocity, thrust, body rates.
pub const FEATURE_SCALE_FLOOR: [f64; FEATURES] = [0.1, 0.1, 0.1, 0.1, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5];
/// Smallest standard deviation per acceleration target, m/s².
pub const TARGET_SCALE_FLOOR: [f64; OUTPUTS] = [1.0; OUTPUTS];

impl NormStats {
    /// Raise every standard deviation to at least the given floor. Flight
    /// data near hover has almost no spread in some channels, and inputs far
    /// outside that spread would otherwise reach the network as huge z-scores.
    pub fn with_floor(mut self, features: &[f64; FEATURES], targets: &[f64; OUTPUTS]) -> Self {
        for (s, f) in self.feature_std.iter_mut().zip(features) {
            *s = s.max(*f);
        }
        for (s, f) in self.target_std.iter_mut().zip(targets) {
            *s = s.max(*f);
        }
        self
    }

    /// Population statistics over every frame of every window.
    pub fn fit(set: &WindowSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (feature_mean, feature_std) = mean_std::<FEATURES>(&set.features);
        let (target_mean, target_std) = mean_std::<OUTPUTS>(&set.targets);
        Ok(Self {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        })
    }

    pub fn normalize_window(&self, raw: &[f64]) -> Vec<f64> {
        raw.chunks(FEATURES)
            .flat_map(|f| (0..FEATURES).map(move |c| (f[c] - self.feature_mean[c]) / self.feature_std[c]))
            .collect()
    }

    pub fn denormalize_window(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .chunks(FEATURES)
            .flat_map(|f| (0..FEATURES).map(move |c| f[c] * self.feature_std[c] + self.feature_mean[c]))
            .collect()
    }

    pub fn normalize_target(&self, y: &[f64; OUTPUTS]) -> [f64; OUTPUTS] {
        std::array::from_fn(|i| (y[i] - self.target_mean[i]) / self.target_std[i])
    }

    pub fn denormalize_target(&self, y: &[f64; OUTPUTS]) -> [f64; OUTPUTS] {
        std::array::from_fn(|i| y[i] * self.target_std[i] + self.target_mean[i])
    }

    /// Normalized copy of a window set.
    pub fn apply(&self, set: &WindowSet) -> WindowSet {
        WindowSet {
            window: set.window,
            features: self.normalize_window(&set.features),
            targets: set
                .targets
                .chunks(OUTPUTS)
                .flat_map(|t| self.normalize_target(&[t[0], t[1], t[2]]))
                .collect(),
            tags: set.tags.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RolloutHeader {
    trajectory: TrajectoryKind,
    wind: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    dt: f64,
    window: usize,
    columns: Vec<String>,
    seed: u64,
    /// `[vx, vy, vz, dx, dy, dz]` per distinct wind.
    winds: Vec<[f64; 6]>,
    rollouts: Vec<RolloutHeader>,
}

/// Self-describing binary: magic, version, JSON header, little-endian rows.
pub fn write_dataset<W: Write>(dataset: &Dataset, window: usize, mut out: W) -> Result<()> {
    let mut winds: Vec<[f64; 6]> = Vec::new();
    let mut rollouts = Vec::new();
    for r in &dataset.rollouts {
        let w = r.wind;
        let entry = [w.velocity.x, w.velocity.y, w.velocity.z, w.drag.x, w.drag.y, w.drag.z];
        let idx = match winds.iter().position(|e| *e == entry) {
            Some(i) => i,
            None => {
                winds.push(entry);
                winds.len() - 1
            }
        };
        rollouts.push(RolloutHeader {
            trajectory: r.trajectory,
            wind: idx,
            len: r.records.len(),
        });
    }
    let header = DatasetHeader {
        dt: dataset.dt,
        window,
        columns: COLUMNS.iter().map(|s| s.to_string()).collect(),
        seed: dataset.seed,
        winds,
        rollouts,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(dataset.record_count() * 18 * 8);
    for r in &dataset.rollouts {
        for rec in &r.records {
            for v in rec.to_row() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Inverse of [`write_dataset`]; returns the dataset and the stored window length.
pub fn read_dataset<R: Read>(mut input: R) -> Result<(Dataset, usize)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Format(format!("dataset version {version}, expected {VERSION}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: DatasetHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    if header.columns != COLUMNS {
        return Err(Error::Format("unexpected column schema".into()));
    }
    let mut rollouts = Vec::with_capacity(header.rollouts.len());
    let mut row = [0u8; 18 * 8];
    for rh in &header.rollouts {
        let w = header
            .winds
            .get(rh.wind)
            .ok_or_else(|| Error::Format(format!("wind index {} out of range", rh.wind)))?;
        let wind = WindField::new(Vector3::new(w[0], w[1], w[2]), Vector3::new(w[3], w[4], w[5]))?;
        let mut records = Vec::with_capacity(rh.len);
        for _ in 0..rh.len {
            input.read_exact(&mut row)?;
            let vals: Vec<f64> = row
                .chunks(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            records.push(FlightRecord::from_row(&vals));
        }
        rollouts.push(Rollout {
            trajectory: rh.trajectory,
            wind,
            records,
        });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after dataset rows".into()));
    }
    Ok((
        Dataset {
            dt: header.dt,
            seed: header.seed,
            rollouts,
        },
        header.window,
    ))
}

pub fn save_dataset(dataset: &Dataset, window: usize, path: &Path) -> Result<()> {
    crate::util::write_atomic(path, |f| write_dataset(dataset, window, f))
}

pub fn load_dataset(path: &Path) -> Result<(Dataset, usize)> {
    read_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Flat CSV for inspection: one row per record, tagged with its rollout.
pub fn write_dataset_csv<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "rollout,trajectory,wind_x,wind_y,{}", COLUMNS.join(","))?;
    for (i, r) in dataset.rollouts.iter().enumerate() {
        for rec in &r.records {
            let row: Vec<String> = rec.to_row().iter().map(|v| v.to_string()).collect();
            writeln!(
                out,
                "{i},{},{},{},{}",
                r.trajectory.slug(),
                r.wind.velocity.x,
                r.wind.velocity.y,
                row.join(",")
            )?;
        }
    }
    Ok(())
}
