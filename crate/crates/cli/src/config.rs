use std::path::{Path, PathBuf};

use quadwind::adapter::AdapterConfig;
use quadwind::bench::MatrixSpec;
use quadwind::data::{CollectConfig, DEFAULT_WINDOW};
use quadwind::dynamics::{WindField, INPUT_DIM, STATE_DIM};
use quadwind::mpc::{MpcConfig, MpcWeights};
use quadwind::net::NetConfig;
use quadwind::train::TrainConfig;
use quadwind::trajectory::TrajectoryParams;
use serde::{Deserialize, Serialize};

pub const ENV_OUTPUT_DIR: &str = "QUADWIND_OUTPUT_DIR";
pub const ENV_THREADS: &str = "QUADWIND_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    /// Linear drag coefficients, 1/s.
    pub drag: [f64; 3],
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            drag: WindField::DEFAULT_DRAG,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// History length `T`, frames.
    pub window: usize,
    /// Rollout length, s.
    pub duration: f64,
    /// Training winds drawn per trajectory from the {0, 2, 4}² grid.
    pub winds_per_kind: usize,
    /// Wind of the prediction-evaluation rollouts, m/s.
    pub eval_wind: [f64; 2],
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            duration: 20.0,
            winds_per_kind: 5,
            eval_wind: [5.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub plant: PlantSection,
    pub trajectories: TrajectoryParams,
    pub mpc: MpcConfig,
    pub weights: MpcWeights,
    pub data: DataSection,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub adapter: AdapterConfig,
    pub bench: MatrixSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "default".into(),
            seed: 0,
            output_dir: PathBuf::from("runs"),
            threads: 0,
            plant: PlantSection::default(),
            trajectories: TrajectoryParams::default(),
            mpc: MpcConfig::default(),
            weights: MpcWeights::default(),
            data: DataSection::default(),
            net: NetConfig::default(),
            train: TrainConfig::default(),
            adapter: AdapterConfig::default(),
            bench: MatrixSpec::default(),
        }
    }
}

/// Parse a `--set` value: a TOML literal if it parses as one, else a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Apply `section.key=value` to a TOML table, creating sections as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{key}` is malformed"));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("override key `{key}`: `{p}` is not a section"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Load from an optional file, then apply `--set` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, String> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                text.parse::<toml::Table>().map_err(|e| format!("config {}: {e}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| format!("config: {e}"))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            duration: self.data.duration,
            seed: self.seed,
            drag: self.plant.drag,
            trajectory: self.trajectories,
            mpc: self.mpc.clone(),
            weights: self.weights.clone(),
        }
    }

    /// Every value checked before any work starts; messages name the key.
    pub fn validate(&self) -> Result<(), String> {
        let wrap = |section: &str, r: quadwind::Result<()>| r.map_err(|e| format!("[{section}] {e}"));
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return Err(format!("run_id must be a plain non-empty name, got `{}`", self.run_id));
        }
        if let Some(d) = self.plant.drag.iter().find(|d| !(**d >= 0.0)) {
            return Err(format!("plant.drag entries must be >= 0, got {d}"));
        }
        wrap("trajectories", self.trajectories.validate())?;
        wrap("mpc", self.mpc.validate(INPUT_DIM))?;
        wrap("weights", self.weights.validate(STATE_DIM, INPUT_DIM))?;
        if self.data.window < 1 {
            return Err("data.window must be >= 1".into());
        }
        if !(self.data.duration > 0.0) {
            return Err(format!("data.duration must be > 0, got {}", self.data.duration));
        }
        wrap("data", quadwind::dynamics::step_count(self.data.duration, self.mpc.dt).map(|_| ()))?;
        if self.data.winds_per_kind < 1 || self.data.winds_per_kind > 9 {
            return Err(format!("data.winds_per_kind must be in [1, 9], got {}", self.data.winds_per_kind));
        }
        wrap("net", self.net.validate())?;
        if self.net.window != self.data.window {
            return Err(format!(
                "net.window ({}) must equal data.window ({})",
                self.net.window, self.data.window
            ));
        }
        wrap("train", self.train.validate())?;
        if (self.train.dt - self.mpc.dt).abs() > 0.0 {
            return Err(format!("train.dt ({}) must equal mpc.dt ({})", self.train.dt, self.mpc.dt));
        }
        wrap("adapter", self.adapter.validate(self.net.window))?;
        let b = &self.bench;
        if b.methods.is_empty() || b.trajectories.is_empty() || b.winds.is_empty() || b.seeds.is_empty() {
            return Err("bench.methods, bench.trajectories, bench.winds and bench.seeds must be non-empty".into());
        }
        wrap("bench", quadwind::dynamics::step_count(b.duration, self.mpc.dt).map(|_| ()))?;
        Ok(())
    }
}
