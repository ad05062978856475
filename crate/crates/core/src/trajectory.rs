//! Analytic reference trajectories.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, Quat, State, GRAVITY};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Circle,
    Ellipse,
    Lemniscate,
    TransposedLemniscate,
    Spiral,
    WarpedEllipse,
    ExtendedLemniscate,
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 7] = [
        TrajectoryKind::Circle,
        TrajectoryKind::Ellipse,
        TrajectoryKind::Lemniscate,
        TrajectoryKind::TransposedLemniscate,
        TrajectoryKind::Spiral,
        TrajectoryKind::WarpedEllipse,
        TrajectoryKind::ExtendedLemniscate,
    ];

    /// Kinds a model may be trained on.
    pub const TRAINING: [TrajectoryKind; 5] = [
        TrajectoryKind::Circle,
        TrajectoryKind::Ellipse,
        TrajectoryKind::Lemniscate,
        TrajectoryKind::TransposedLemniscate,
        TrajectoryKind::Spiral,
    ];

    /// Kinds held out for generalization tests.
    pub const UNSEEN: [TrajectoryKind; 2] =
        [TrajectoryKind::WarpedEllipse, TrajectoryKind::ExtendedLemniscate];

    pub fn is_unseen(self) -> bool {
        Self::UNSEEN.contains(&self)
    }

    pub fn is_periodic(self) -> bool {
        self != TrajectoryKind::Spiral
    }

    /// Short kebab-case name used on the command line and in file names.
    pub fn slug(self) -> &'static str {
        match self {
            TrajectoryKind::Circle => "circle",
            TrajectoryKind::Ellipse => "ellipse",
            TrajectoryKind::Lemniscate => "lemniscate",
            TrajectoryKind::TransposedLemniscate => "transposed-lemniscate",
            TrajectoryKind::Spiral => "spiral",
            TrajectoryKind::WarpedEllipse => "warped-ellipse",
            TrajectoryKind::ExtendedLemniscate => "extended-lemniscate",
        }
    }

    pub fn index(self) -> u8 {
        Self::ALL.iter().position(|k| *k == self).unwrap() as u8
    }

    pub fn from_index(i: u8) -> Result<Self> {
        Self::ALL
            .get(i as usize)
            .copied()
            .ok_or_else(|| Error::UnknownKind(format!("#{i}")))
    }
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TrajectoryKind::Circle => "Circle",
            TrajectoryKind::Ellipse => "Ellipse",
            TrajectoryKind::Lemniscate => "Lemniscate",
            TrajectoryKind::TransposedLemniscate => "TransposedLemniscate",
            TrajectoryKind::Spiral => "Spiral",
            TrajectoryKind::WarpedEllipse => "WarpedEllipse",
            TrajectoryKind::ExtendedLemniscate => "ExtendedLemniscate",
        };
        f.write_str(name)
    }
}

impl FromStr for TrajectoryKind {
    type Err = Error;

    /// Accepts the slug or the CamelCase name, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.slug().replace('-', "") == key)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// Shape parameters shared by every kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryParams {
    /// Primary radius `a`, m.
    pub radius_a: f64,
    /// Secondary radius `b`, m.
    pub radius_b: f64,
    /// Cruise height `h`, m.
    pub height: f64,
    /// Angular rate `ω_t`, rad/s.
    pub angular_rate: f64,
    /// Spiral climb rate `c`, m/s.
    pub climb_rate: f64,
    /// Vertical warp amplitude `d`, m.
    pub warp: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            radius_a: 2.0,
            radius_b: 1.5,
            height: 1.0,
            angular_rate: 2.0 * PI / 20.0,
            climb_rate: 0.05,
            warp: 0.5,
        }
    }
}

impl TrajectoryParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radius_a", self.radius_a),
            ("radius_b", self.radius_b),
            ("height", self.height),
            ("angular_rate", self.angular_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {name} must be > 0, got {v}"
                )));
            }
        }
        for (name, v) in [("climb_rate", self.climb_rate), ("warp", self.warp)] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {name} must be finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Full reference for one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quat,
    pub rates: Vector3<f64>,
    pub thrust: f64,
}

impl ReferenceState {
    pub fn state(&self) -> State {
        State {
            p: self.p,
            q: self.q,
            v: self.v,
        }
    }

    pub fn input(&self) -> ControlInput {
        ControlInput {
            thrust: self.thrust,
            rates: self.rates,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub params: TrajectoryParams,
}

impl Trajectory {
    pub fn new(kind: TrajectoryKind, params: TrajectoryParams) -> Self {
        Self { kind, params }
    }

    pub fn with_defaults(kind: TrajectoryKind) -> Self {
        Self::new(kind, TrajectoryParams::default())
    }

    /// Position and velocity at `t`.
    fn position_velocity(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let TrajectoryParams {
            radius_a: a,
            radius_b: b,
            height: h,
            angular_rate: w,
            climb_rate: c,
            warp: d,
        } = self.params;
        let (s, co) = (w * t).sin_cos();
        // Gerono lemniscate (a cos, a sin cos) = (a cos, a/2 sin 2wt).
        let lemniscate = |amp: f64| {
            let (s2, c2) = (2.0 * w * t).sin_cos();
            (
                Vector3::new(amp * co, 0.5 * amp * s2, h),
                Vector3::new(-amp * w * s, amp * w * c2, 0.0),
            )
        };
        match self.kind {
            TrajectoryKind::Circle => (
                Vector3::new(a * co, a * s, h),
                Vector3::new(-a * w * s, a * w * co, 0.0),
            ),
            TrajectoryKind::Ellipse => (
                Vector3::new(a * co, b * s, h),
                Vector3::new(-a * w * s, b * w * co, 0.0),
            ),
            TrajectoryKind::Lemniscate => lemniscate(a),
            TrajectoryKind::TransposedLemniscate => {
                let (p, v) = lemniscate(a);
                (Vector3::new(p.y, p.x, p.z), Vector3::new(v.y, v.x, v.z))
            }
            TrajectoryKind::Spiral => (
                Vector3::new(a * co, a * s, h + c * t),
                Vector3::new(-a * w * s, a * w * co, c),
            ),
            TrajectoryKind::WarpedEllipse => {
                let (s2, c2) = (2.0 * w * t).sin_cos();
                (
                    Vector3::new(a * co, b * s, h + d * s2),
                    Vector3::new(-a * w * s, b * w * co, 2.0 * d * w * c2),
                )
            }
            TrajectoryKind::ExtendedLemniscate => {
                let (mut p, mut v) = lemniscate(1.5 * a);
                p.z = h + d * s;
                v.z = d * w * co;
                (p, v)
            }
        }
    }

    pub fn sample(&self, t: f64) -> Result<ReferenceState> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("reference time must be >= 0, got {t}")));
        }
        let (p, v) = self.position_velocity(t);
        Ok(ReferenceState {
            p,
            v,
            q: Quat::IDENTITY,
            rates: Vector3::zeros(),
            thrust: GRAVITY,
        })
    }

    /// `horizon + 1` samples at `t0, t0 + dt, …, t0 + horizon·dt`.
    pub fn horizon(&self, t0: f64, horizon: usize, dt: f64) -> Result<Vec<ReferenceState>> {
        if horizon < 1 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        (0..=horizon).map(|k| self.sample(t0 + k as f64 * dt)).collect()
    }

    /// Vehicle state at `t = 0`: on the path, velocity matched, level.
    pub fn initial_state(&self) -> State {
        self.sample(0.0).expect("t = 0 is valid").state()
    }
}
