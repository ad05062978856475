//! Quaternion rigid-body model of the quadrotor, the RK4 integrator, and the
//! wind-augmented plant that stands in for the real vehicle.
//!
//! Conventions: world frame is z-up with gravity `(0, 0, -9.81)` m/s²,
//! quaternions are Hamilton, body-to-world, stored `(w, x, y, z)`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{Matrix3, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Dimension of the state vector `(p, q, v)`.
pub const STATE_DIM: usize = 10;
/// Dimension of the input vector `(t_mn, ω)`.
pub const INPUT_DIM: usize = 4;

/// Quaternion `(w, x, y, z)`. Not necessarily unit; derivatives live here too.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat::new(1.0, 0.0, 0.0, 0.0);
    pub const ZERO: Quat = Quat::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `(0, v)`.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let a = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    /// Rotation matrix of a unit quaternion.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let Quat { w, x, y, z } = *self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Image of the body z-axis in the world frame.
    pub fn body_z(&self) -> Vector3<f64> {
        let Quat { w, x, y, z } = *self;
        Vector3::new(
            2.0 * (x * z + w * y),
            2.0 * (y * z - w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle of a unit quaternion in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.w.abs().min(1.0).acos()
    }
}

impl Mul for Quat {
    type Output = Quat;

    /// Hamilton product.
    fn mul(self, b: Quat) -> Quat {
        let a = self;
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Add for Quat {
    type Output = Quat;
    fn add(self, b: Quat) -> Quat {
        Quat::new(self.w + b.w, self.x + b.x, self.y + b.y, self.z + b.z)
    }
}

impl Sub for Quat {
    type Output = Quat;
    fn sub(self, b: Quat) -> Quat {
        Quat::new(self.w - b.w, self.x - b.x, self.y - b.y, self.z - b.z)
    }
}

pub fn quat_multiply(a: Quat, b: Quat) -> Quat {
    a * b
}

/// Position, attitude and velocity of the vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub p: Vector3<f64>,
    pub q: Quat,
    pub v: Vector3<f64>,
}

impl State {
    pub fn hover_at(p: Vector3<f64>) -> Self {
        Self {
            p,
            q: Quat::IDENTITY,
            v: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> SVector<f64, STATE_DIM> {
        let mut out = SVector::<f64, STATE_DIM>::zeros();
        out.as_mut_slice().copy_from_slice(&self.to_array());
        out
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.p.x, self.p.y, self.p.z, self.q.w, self.q.x, self.q.y, self.q.z, self.v.x,
            self.v.y, self.v.z,
        ]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            p: Vector3::new(s[0], s[1], s[2]),
            q: Quat::from_slice(&s[3..7]),
            v: Vector3::new(s[7], s[8], s[9]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn renormalized(mut self) -> Self {
        self.q = self.q.normalized();
        self
    }
}

/// Mass-normalized collective thrust (m/s²) and body rates (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub thrust: f64,
    pub rates: Vector3<f64>,
}

impl ControlInput {
    pub fn new(thrust: f64, wx: f64, wy: f64, wz: f64) -> Self {
        Self {
            thrust,
            rates: Vector3::new(wx, wy, wz),
        }
    }

    pub fn hover() -> Self {
        Self::new(GRAVITY, 0.0, 0.0, 0.0)
    }

    pub fn to_array(&self) -> [f64; INPUT_DIM] {
        [self.thrust, self.rates.x, self.rates.y, self.rates.z]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDerivative {
    pub dp: Vector3<f64>,
    pub dq: Quat,
    pub dv: Vector3<f64>,
}

impl StateDerivative {
    pub fn to_vector(&self) -> SVector<f64, STATE_DIM> {
        SVector::<f64, STATE_DIM>::from_column_slice(&[
            self.dp.x, self.dp.y, self.dp.z, self.dq.w, self.dq.x, self.dq.y, self.dq.z,
            self.dv.x, self.dv.y, self.dv.z,
        ])
    }
}

/// Constant wind with linear drag on relative airspeed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindField {
    /// Wind velocity, world frame, m/s.
    pub velocity: Vector3<f64>,
    /// Diagonal of the drag matrix, 1/s.
    pub drag: Vector3<f64>,
}

impl WindField {
    pub const DEFAULT_DRAG: [f64; 3] = [0.3, 0.3, 0.15];

    pub fn new(velocity: Vector3<f64>, drag: Vector3<f64>) -> Result<Self> {
        if drag.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "drag coefficients must be finite and >= 0, got {:?}",
                drag.as_slice()
            )));
        }
        Ok(Self { velocity, drag })
    }

    /// Horizontal wind with the default drag matrix.
    pub fn horizontal(wind_x: f64, wind_y: f64) -> Self {
        Self {
            velocity: Vector3::new(wind_x, wind_y, 0.0),
            drag: Vector3::from(Self::DEFAULT_DRAG),
        }
    }

    pub fn calm() -> Self {
        Self::horizontal(0.0, 0.0)
    }

    /// Drag acceleration `-D (v - v_w)` at vehicle velocity `v`.
    pub fn drag_acceleration(&self, v: &Vector3<f64>) -> Vector3<f64> {
        -self.drag.component_mul(&(v - self.velocity))
    }
}

fn check_unit(q: &Quat) -> Result<()> {
    let n = q.norm();
    if (n - 1.0).abs() > 1e-3 || !n.is_finite() {
        return Err(Error::NonUnitQuaternion { norm: n });
    }
    Ok(())
}

/// First-principles rigid-body model: no drag, no wind.
pub fn nominal_derivative(x: &State, u: &ControlInput) -> Result<StateDerivative> {
    check_unit(&x.q)?;
    let dq = (x.q * Quat::pure(&u.rates)).scale(0.5);
    let dv = x.q.body_z() * u.thrust - Vector3::new(0.0, 0.0, GRAVITY);
    Ok(StateDerivative { dp: x.v, dq, dv })
}

/// Ground-truth plant: nominal model plus drag on relative airspeed.
pub fn plant_derivative(x: &State, u: &ControlInput, wind: &WindField) -> Result<StateDerivative> {
    let mut d = nominal_derivative(x, u)?;
    d.dv += wind.drag_acceleration(&x.v);
    Ok(d)
}

/// Nominal model with a constant velocity-derivative offset.
pub fn offset_derivative(
    x: &State,
    u: &ControlInput,
    accel_offset: &Vector3<f64>,
) -> Result<StateDerivative> {
    let mut d = nominal_derivative(x, u)?;
    // Skipped for an exactly-zero offset so the result stays bit-identical to
    // the nominal model (adding +0.0 would flip the sign of -0.0 entries).
    if *accel_offset != Vector3::zeros() {
        d.dv += accel_offset;
    }
    Ok(d)
}

/// One classical Runge-Kutta step of `dy/dt = f(y)` on a fixed-size vector.
pub fn rk4<const N: usize, E>(
    mut f: impl FnMut(&SVector<f64, N>) -> std::result::Result<SVector<f64, N>, E>,
    y: &SVector<f64, N>,
    h: f64,
) -> std::result::Result<SVector<f64, N>, E> {
    let k1 = f(y)?;
    let k2 = f(&(y + k1 * (0.5 * h)))?;
    let k3 = f(&(y + k2 * (0.5 * h)))?;
    let k4 = f(&(y + k3 * h))?;
    Ok(y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
}

/// RK4 step of a state-derivative function with the input held constant;
/// the quaternion is renormalized at every stage and afterwards.
pub fn rk4_step<F>(f: F, x: &State, u: &ControlInput, dt: f64) -> Result<State>
where
    F: Fn(&State, &ControlInput) -> Result<StateDerivative>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    check_unit(&x.q)?;
    let y = rk4(
        |y: &SVector<f64, STATE_DIM>| {
            // Stage states drift off the unit sphere by O(h·ω); evaluate
            // them on it so the derivative's norm check sees a rotation.
            f(&State::from_slice(y.as_slice()).renormalized(), u).map(|d| d.to_vector())
        },
        &x.to_vector(),
        dt,
    )?;
    let next = State::from_slice(y.as_slice());
    if !next.is_finite() {
        return Err(Error::NonFiniteState);
    }
    Ok(next.renormalized())
}

/// One simulated time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimRecord {
    pub t: f64,
    pub state: State,
    pub input: ControlInput,
    /// True plant derivative at `(state, input)`, before integration.
    pub derivative: StateDerivative,
}

/// Number of `dt` steps in `duration`, rejecting non-integral ratios.
pub fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration and dt must be > 0 (got {duration}, {dt})"
        )));
    }
    let n = (duration / dt).round();
    if ((n * dt) - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(Error::DurationNotMultiple { duration, dt });
    }
    Ok(n as usize)
}

/// Roll the wind-augmented plant forward under `controller`.
///
/// The controller sees `(t, state)` and returns the input held over the next
/// step; its failures come back wrapped with the failing timestamp.
pub fn simulate<C>(
    x0: &State,
    mut controller: C,
    wind: &WindField,
    duration: f64,
    dt: f64,
) -> Result<Vec<SimRecord>>
where
    C: FnMut(f64, &State) -> Result<ControlInput>,
{
    let steps = step_count(duration, dt)?;
    let mut records = Vec::with_capacity(steps);
    let mut x = *x0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = controller(t, &x).map_err(|e| Error::at_time(t, e))?;
        let derivative = plant_derivative(&x, &u, wind).map_err(|e| Error::at_time(t, e))?;
        records.push(SimRecord {
            t,
            state: x,
            input: u,
            derivative,
        });
        x = rk4_step(|s, c| plant_derivative(s, c, wind), &x, &u, dt)
            .map_err(|e| Error::at_time(t, e))?;
    }
    Ok(records)
}
