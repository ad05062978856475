//! Receding-horizon nonlinear MPC: multiple shooting, Gauss-Newton SQP with
//! finite-difference Jacobians, condensed box-constrained QP subproblems and
//! an ℓ1 merit line search.

pub mod qp;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    offset_derivative, plant_derivative, rk4_step, simulate, ControlInput, SimRecord, State,
    WindField, INPUT_DIM, STATE_DIM,
};
use crate::error::{Error, Result};
use crate::trajectory::{ReferenceState, Trajectory};

/// A discrete-time model `x⁺ = F(x, u; dt)` on flat vectors.
pub trait DiscreteModel {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>>;
    /// Map an iterate back onto the state manifold.
    fn project(&self, _x: &mut DVector<f64>) {}
}

/// RK4-discretized quadrotor: nominal model, optionally with a frozen
/// acceleration offset (the disturbance-corrected model) or with the true
/// plant drag (an oracle model).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadrotorModel {
    pub accel_offset: Vector3<f64>,
    pub plant_wind: Option<WindField>,
}

impl QuadrotorModel {
    pub fn nominal() -> Self {
        Self {
            accel_offset: Vector3::zeros(),
            plant_wind: None,
        }
    }

    pub fn corrected(accel_offset: Vector3<f64>) -> Self {
        Self {
            accel_offset,
            plant_wind: None,
        }
    }

    pub fn exact_plant(wind: WindField) -> Self {
        Self {
            accel_offset: Vector3::zeros(),
            plant_wind: Some(wind),
        }
    }

    pub fn step_state(&self, x: &State, u: &ControlInput, dt: f64) -> Result<State> {
        match &self.plant_wind {
            Some(w) => rk4_step(|s, c| plant_derivative(s, c, w), x, u, dt),
            None => rk4_step(|s, c| offset_derivative(s, c, &self.accel_offset), x, u, dt),
        }
    }
}

impl DiscreteModel for QuadrotorModel {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn input_dim(&self) -> usize {
        INPUT_DIM
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        // SQP iterates drift off the unit sphere; the model is defined on it.
        let x = State::from_slice(x.as_slice()).renormalized();
        let next = self.step_state(&x, &ControlInput::from_slice(u.as_slice()), dt)?;
        Ok(DVector::from_row_slice(&next.to_array()))
    }

    fn project(&self, x: &mut DVector<f64>) {
        let n = x.rows(3, 4).norm();
        if n > 0.0 {
            x.rows_mut(3, 4).unscale_mut(n);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearch {
    /// Sufficient-decrease coefficient.
    pub armijo: f64,
    /// Backtracking factor in (0, 1).
    pub shrink: f64,
    /// Smallest step tried before declaring divergence.
    pub min_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            armijo: 1e-4,
            shrink: 0.5,
            min_step: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub max_sqp_iters: usize,
    pub kkt_tol: f64,
    #[serde(default)]
    pub line_search: LineSearch,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.02,
            u_min: vec![2.0, -3.0, -3.0, -3.0],
            u_max: vec![20.0, 3.0, 3.0, 3.0],
            max_sqp_iters: 10,
            kkt_tol: 1e-4,
            line_search: LineSearch::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.horizon < 1 {
            return bad("mpc.horizon must be >= 1".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("mpc.dt must be > 0, got {}", self.dt));
        }
        if self.u_min.len() != input_dim || self.u_max.len() != input_dim {
            return bad(format!("mpc.u_min/u_max must have {input_dim} entries"));
        }
        if self.u_min.iter().zip(&self.u_max).any(|(l, u)| !(l < u)) {
            return bad("mpc.u_min must be < mpc.u_max componentwise".into());
        }
        if !(self.kkt_tol > 0.0) {
            return bad(format!("mpc.kkt_tol must be > 0, got {}", self.kkt_tol));
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.armijo > 0.0 && ls.armijo < 0.5) || !(ls.min_step > 0.0) {
            return bad("mpc.line_search needs 0 < armijo < 0.5, 0 < shrink < 1, min_step > 0".into());
        }
        Ok(())
    }

    fn clamp_input(&self, u: &mut DVector<f64>) {
        for i in 0..u.len() {
            u[i] = u[i].clamp(self.u_min[i], self.u_max[i]);
        }
    }
}

/// Diagonal tracking weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcWeights {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default)]
    pub q_terminal: Option<Vec<f64>>,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            q: vec![10.0, 10.0, 10.0, 5.0, 5.0, 5.0, 5.0, 1.0, 1.0, 1.0],
            r: vec![0.1, 0.2, 0.2, 0.2],
            q_terminal: None,
        }
    }
}

impl MpcWeights {
    pub fn validate(&self, state_dim: usize, input_dim: usize) -> Result<()> {
        let qt = self.terminal();
        if self.q.len() != state_dim || qt.len() != state_dim || self.r.len() != input_dim {
            return Err(Error::InvalidArgument(format!(
                "weights need {state_dim} state and {input_dim} input entries"
            )));
        }
        if self.q.iter().chain(qt).chain(&self.r).any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be >= 0".into()));
        }
        Ok(())
    }

    pub fn terminal(&self) -> &[f64] {
        self.q_terminal.as_deref().unwrap_or(&self.q)
    }
}

/// State and input reference for one horizon node.
#[derive(Clone, Debug, PartialEq)]
pub struct RefPoint {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
}

impl From<&ReferenceState> for RefPoint {
    fn from(r: &ReferenceState) -> Self {
        Self {
            x: DVector::from_row_slice(&r.state().to_array()),
            u: DVector::from_row_slice(&r.input().to_array()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcSolution {
    /// Predicted states `x_0 … x_H`.
    pub states: Vec<DVector<f64>>,
    /// Predicted inputs `u_0 … u_{H-1}`.
    pub inputs: Vec<DVector<f64>>,
    pub cost: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl MpcSolution {
    /// First input as a quadrotor command.
    pub fn first_input(&self) -> ControlInput {
        ControlInput::from_slice(self.inputs[0].as_slice())
    }

    pub fn max_defect(&self, model: &dyn DiscreteModel, dt: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for k in 0..self.inputs.len() {
            let next = model.step(&self.states[k], &self.inputs[k], dt)?;
            worst = worst.max((next - &self.states[k + 1]).amax());
        }
        Ok(worst)
    }
}

/// Affine model `F(x + δx, u + δu) ≈ offset + A δx + B δu`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub offset: DVector<f64>,
}

/// Central finite-difference Jacobians of a discrete model, relative step 1e-6.
pub fn linearize_dynamics(
    model: &dyn DiscreteModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<Linearization> {
    let (n, m) = (model.state_dim(), model.input_dim());
    let offset = model.step(x, u, dt)?;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut xp = x.clone();
    for i in 0..n {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = model.step(&xp, u, dt)?;
        xp[i] = x[i] - h;
        let fm = model.step(&xp, u, dt)?;
        xp[i] = x[i];
        a.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    let mut up = u.clone();
    for j in 0..m {
        let h = 1e-6 * u[j].abs().max(1.0);
        up[j] = u[j] + h;
        let fp = model.step(x, &up, dt)?;
        up[j] = u[j] - h;
        let fm = model.step(x, &up, dt)?;
        up[j] = u[j];
        b.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteJacobian);
    }
    Ok(Linearization { a, b, offset })
}

struct Problem<'a> {
    model: &'a dyn DiscreteModel,
    refs: &'a [RefPoint],
    cfg: &'a MpcConfig,
    q: DVector<f64>,
    qt: DVector<f64>,
    r: DVector<f64>,
}

impl Problem<'_> {
    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn state_weight(&self, k: usize) -> &DVector<f64> {
        if k == self.horizon() {
            &self.qt
        } else {
            &self.q
        }
    }

    fn cost(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
        let mut c = 0.0;
        for (k, x) in xs.iter().enumerate() {
            let e = x - &self.refs[k].x;
            c += e.component_mul(&e).dot(self.state_weight(k));
        }
        for (k, u) in us.iter().enumerate() {
            let e = u - &self.refs[k].u;
            c += e.component_mul(&e).dot(&self.r);
        }
        c
    }

    fn defects(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        (0..self.horizon())
            .map(|k| Ok(self.model.step(&xs[k], &us[k], self.cfg.dt)? - &xs[k + 1]))
            .collect()
    }

    fn merit(&self, xs: &[DVector<f64>], us: &[DVector<f64>], penalty: f64) -> Result<f64> {
        let infeas: f64 = self.defects(xs, us)?.iter().map(|d| d.lp_norm(1)).sum();
        Ok(self.cost(xs, us) + penalty * infeas)
    }

    fn rollout(&self, x0: &DVector<f64>, us: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut xs = Vec::with_capacity(us.len() + 1);
        xs.push(x0.clone());
        for (k, u) in us.iter().enumerate() {
            let next = self.model.step(&xs[k], u, self.cfg.dt)?;
            xs.push(next);
        }
        Ok(xs)
    }
}

/// Condensed Gauss-Newton subproblem at the current iterate.
struct Subproblem {
    lin: Vec<Linearization>,
    defects: Vec<DVector<f64>>,
    /// `sens[k][j] = ∂x_k/∂u_j` for `j < k`.
    sens: Vec<Vec<DMatrix<f64>>>,
    hessian: DMatrix<f64>,
    /// Gradient including the defect-closing free response.
    gradient: DVector<f64>,
    /// Reduced gradient of the nonlinear problem (adjoint gradient).
    reduced_gradient: DVector<f64>,
}

fn build_subproblem(p: &Problem, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Result<Subproblem> {
    let h = p.horizon();
    let m = p.model.input_dim();
    let lin: Vec<Linearization> = (0..h)
        .map(|k| linearize_dynamics(p.model, &xs[k], &us[k], p.cfg.dt))
        .collect::<Result<_>>()?;
    let defects: Vec<DVector<f64>> = (0..h).map(|k| &lin[k].offset - &xs[k + 1]).collect();

    let mut sens: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); h + 1];
    for k in 0..h {
        let mut row: Vec<DMatrix<f64>> = sens[k].iter().map(|g| &lin[k].a * g).collect();
        row.push(lin[k].b.clone());
        sens[k + 1] = row;
    }

    // Free response of the linearized dynamics to the defects.
    let mut free = vec![DVector::zeros(p.model.state_dim()); h + 1];
    for k in 0..h {
        free[k + 1] = &lin[k].a * &free[k] + &defects[k];
    }

    let nz = h * m;
    let mut hessian = DMatrix::zeros(nz, nz);
    let mut gradient = DVector::zeros(nz);
    let mut reduced_gradient = DVector::zeros(nz);
    for k in 1..=h {
        let w = p.state_weight(k);
        let e = &xs[k] - &p.refs[k].x;
        let we = e.component_mul(w) * 2.0;
        let wes = (&e + &free[k]).component_mul(w) * 2.0;
        let weighted: Vec<DMatrix<f64>> = sens[k]
            .iter()
            .map(|g| {
                let mut wg = g.clone();
                for (r, wr) in w.iter().enumerate() {
                    wg.row_mut(r).scale_mut(2.0 * wr);
                }
                wg
            })
            .collect();
        for (i, gi) in sens[k].iter().enumerate() {
            gradient.rows_mut(i * m, m).gemv_tr(1.0, gi, &wes, 1.0);
            reduced_gradient.rows_mut(i * m, m).gemv_tr(1.0, gi, &we, 1.0);
            for (j, wgj) in weighted.iter().enumerate() {
                let mut block = hessian.view_mut((i * m, j * m), (m, m));
                block.gemm_tr(1.0, gi, wgj, 1.0);
            }
        }
    }
    for j in 0..h {
        let e = (&us[j] - &p.refs[j].u).component_mul(&p.r) * 2.0;
        let mut g = gradient.rows_mut(j * m, m);
        g += &e;
        let mut rg = reduced_gradient.rows_mut(j * m, m);
        rg += &e;
        for c in 0..m {
            hessian[(j * m + c, j * m + c)] += 2.0 * p.r[c];
        }
    }

    Ok(Subproblem {
        lin,
        defects,
        sens,
        hessian,
        gradient,
        reduced_gradient,
    })
}

fn kkt_residual(p: &Problem, us: &[DVector<f64>], sub: &Subproblem) -> f64 {
    let m = p.model.input_dim();
    let mut res = 0.0f64;
    for (j, u) in us.iter().enumerate() {
        for c in 0..m {
            let g = sub.reduced_gradient[j * m + c];
            let projected = u[c] - (u[c] - g).clamp(p.cfg.u_min[c], p.cfg.u_max[c]);
            res = res.max(projected.abs());
        }
    }
    sub.defects.iter().fold(res, |r, d| r.max(d.amax()))
}

/// Solve the tracking OCP from `x_init` over `refs` (`horizon + 1` nodes).
///
/// The returned trajectory is a nonlinear rollout of the returned inputs, so
/// shooting defects are closed exactly; its cost never exceeds the rollout
/// cost of the (shifted) warm start.
pub fn solve(
    model: &dyn DiscreteModel,
    x_init: &DVector<f64>,
    refs: &[RefPoint],
    cfg: &MpcConfig,
    weights: &MpcWeights,
    warm_start: Option<&MpcSolution>,
) -> Result<MpcSolution> {
    let (n, m) = (model.state_dim(), model.input_dim());
    let h = cfg.horizon;
    if refs.len() != h + 1 {
        return Err(Error::HorizonMismatch {
            expected: h + 1,
            got: refs.len(),
        });
    }
    if x_init.len() != n || x_init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial state must be finite with matching dimension".into()));
    }
    let p = Problem {
        model,
        refs,
        cfg,
        q: DVector::from_row_slice(&weights.q),
        qt: DVector::from_row_slice(weights.terminal()),
        r: DVector::from_row_slice(&weights.r),
        };
    if p.q.len() != n || p.qt.len() != n || p.r.len() != m {
        return Err(Error::shape(format!("weights for {n} states, {m} inputs"), "mismatched weights"));
    }

    // Initial iterate: shifted warm start, else the reference itself.
    let (mut xs, mut us) = match warm_start.filter(|w| w.inputs.len() == h && w.states.len() == h + 1) {
        Some(w) => {
            let mut us: Vec<DVector<f64>> = w.inputs[1..].to_vec();
            us.push(w.inputs[h - 1].clone());
            let mut xs = Vec::with_capacity(h + 1);
            xs.push(x_init.clone());
            xs.extend(w.states[2..].iter().cloned());
            xs.push(model.step(&w.states[h], &w.inputs[h - 1], cfg.dt)?);
            (xs, us)
        }
        None => {
            let us: Vec<DVector<f64>> = refs[..h].iter().map(|r| r.u.clone()).collect();
            let mut xs: Vec<DVector<f64>> = refs.iter().map(|r| r.x.clone()).collect();
            xs[0] = x_init.clone();
            (xs, us)
        }
    };
    for u in us.iter_mut() {
        cfg.clamp_input(u);
    }
    for x in xs.iter_mut().skip(1) {
        model.project(x);
    }
    let initial_inputs = us.clone();

    let lo_abs = DVector::from_row_slice(&cfg.u_min);
    let hi_abs = DVector::from_row_slice(&cfg.u_max);
    let mut penalty = 1.0f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..=cfg.max_sqp_iters {
        let sub = build_subproblem(&p, &xs, &us)?;
        residual = kkt_residual(&p, &us, &sub);
        if residual <= cfg.kkt_tol || iter == cfg.max_sqp_iters {
            break;
        }

        let lo = DVector::from_fn(h * m, |i, _| lo_abs[i % m] - us[i / m][i % m]);
        let hi = DVector::from_fn(h * m, |i, _| hi_abs[i % m] - us[i / m][i % m]);
        let du = qp::solve_box_qp(&sub.hessian, &sub.gradient, &lo, &hi)?.x;

        let mut dxs = vec![DVector::zeros(n); h + 1];
        for k in 0..h {
            dxs[k + 1] = &sub.lin[k].a * &dxs[k] + &sub.lin[k].b * du.rows(k * m, m) + &sub.defects[k];
        }
        debug_assert_eq!(sub.sens.len(), h + 1);

        // Multipliers of the linearized dynamics via the adjoint recursion.
        let mut lambda = (&xs[h] + &dxs[h] - &refs[h].x).component_mul(&p.qt) * 2.0;
        let mut lambda_max = lambda.amax();
        for k in (1..h).rev() {
            lambda = (&xs[k] + &dxs[k] - &refs[k].x).component_mul(&p.q) * 2.0 + sub.lin[k].a.tr_mul(&lambda);
            lambda_max = lambda_max.max(lambda.amax());
        }
        penalty = penalty.max(1.5 * lambda_max + 1e-3);

        // Directional derivative of the merit along the step.
        let mut slope = 0.0;
        for k in 1..=h {
            let e = (&xs[k] - &refs[k].x).component_mul(p.state_weight(k)) * 2.0;
            slope += e.dot(&dxs[k]);
        }
        for k in 0..h {
            let e = (&us[k] - &refs[k].u).component_mul(&p.r) * 2.0;
            slope += e.dot(&du.rows(k * m, m));
        }
        let infeas: f64 = sub.defects.iter().map(|d| d.lp_norm(1)).sum();
        slope -= penalty * infeas;

        let merit0 = p.cost(&xs, &us) + penalty * infeas;
        if slope >= -1e-14 * (1.0 + merit0.abs()) {
            break;
        }

        let ls = &cfg.line_search;
        let mut alpha = 1.0;
        let accepted = loop {
            let cand_x: Vec<DVector<f64>> = xs.iter().zip(&dxs).map(|(x, d)| x + d * alpha).collect();
            let cand_u: Vec<DVector<f64>> =
                (0..h).map(|k| &us[k] + du.rows(k * m, m) * alpha).collect();
            let merit = p.merit(&cand_x, &cand_u, penalty)?;
            if merit.is_finite() && merit <= merit0 + ls.armijo * alpha * slope {
                break Some((cand_x, cand_u));
            }
            alpha *= ls.shrink;
            if alpha < ls.min_step {
                break None;
            }
        };
        match accepted {
            Some((cx, cu)) => {
                xs = cx;
                us = cu;
                for x in xs.iter_mut().skip(1) {
                    model.project(x);
                }
                for u in us.iter_mut() {
                    cfg.clamp_input(u);
                }
                iterations += 1;
            }
            None => {
                return Err(Error::SolverDiverged {
                    merit: merit0,
                    iteration: iter,
                })
            }
        }
    }

    let mut states = p.rollout(x_init, &us)?;
    let mut cost = p.cost(&states, &us);
    let warm_states = p.rollout(x_init, &initial_inputs)?;
    let warm_cost = p.cost(&warm_states, &initial_inputs);
    if !(cost <= warm_cost) {
        us = initial_inputs;
        states = warm_states;
        cost = warm_cost;
    }
    Ok(MpcSolution {
        states,
        inputs: us,
        cost,
        kkt_residual: residual,
        iterations,
    })
}

/// Supplies the prediction model for every control step of a closed loop.
pub trait PredictionModel {
    /// Model for the solve at time `t` from measured state `x`.
    fn model_for_step(&mut self, t: f64, x: &State) -> Result<QuadrotorModel>;

    /// Called after `u` has been chosen for state `x` at time `t`.
    fn applied(&mut self, _t: f64, _x: &State, _u: &ControlInput) -> Result<()> {
        Ok(())
    }
}

/// The first-principles model, no compensation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NominalPrediction;

impl PredictionModel for NominalPrediction {
    fn model_for_step(&mut self, _t: f64, _x: &State) -> Result<QuadrotorModel> {
        Ok(QuadrotorModel::nominal())
    }
}

/// Oracle: the controller knows the plant exactly, drag included.
#[derive(Clone, Copy, Debug)]
pub struct ExactPlantPrediction(pub WindField);

impl PredictionModel for ExactPlantPrediction {
    fn model_for_step(&mut self, _t: f64, _x: &State) -> Result<QuadrotorModel> {
        Ok(QuadrotorModel::exact_plant(self.0))
    }
}

/// Oracle disturbance estimate: the true drag at the measured state, scaled
/// per axis and frozen over the horizon.
#[derive(Clone, Copy, Debug)]
pub struct OracleDisturbance {
    pub wind: WindField,
    pub gains: Vector3<f64>,
}

impl PredictionModel for OracleDisturbance {
    fn model_for_step(&mut self, _t: f64, x: &State) -> Result<QuadrotorModel> {
        Ok(QuadrotorModel::corrected(
            self.gains.component_mul(&self.wind.drag_acceleration(&x.v)),
        ))
    }
}

#[derive(Clone, Debug)]
pub struct TrackLog {
    pub records: Vec<SimRecord>,
    pub references: Vec<ReferenceState>,
    pub rmse: f64,
    pub sqp_iterations: usize,
    pub max_kkt_residual: f64,
}

/// `sqrt(mean ‖p − p_r‖²)` over paired samples.
pub fn tracking_rmse(records: &[SimRecord], references: &[ReferenceState]) -> f64 {
    let n = records.len().min(references.len());
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = records
        .iter()
        .zip(references)
        .map(|(r, p)| (r.state.p - p.p).norm_squared())
        .sum();
    (sum / n as f64).sqrt()
}

/// Closed-loop tracking of `trajectory` on the wind plant.
pub fn track(
    trajectory: &Trajectory,
    predictor: &mut dyn PredictionModel,
    wind: &WindField,
    cfg: &MpcConfig,
    weights: &MpcWeights,
    duration: f64,
) -> Result<TrackLog> {
    cfg.validate(INPUT_DIM)?;
    weights.validate(STATE_DIM, INPUT_DIM)?;
    let mut warm: Option<MpcSolution> = None;
    let mut sqp_iterations = 0;
    let mut max_kkt = 0.0f64;
    let records = simulate(
        &trajectory.initial_state(),
        |t, x| {
            let model = predictor.model_for_step(t, x)?;
            let refs: Vec<RefPoint> = trajectory
                .horizon(t, cfg.horizon, cfg.dt)?
                .iter()
                .map(RefPoint::from)
                .collect();
            let x_vec = DVector::from_row_slice(&x.to_array());
            let sol = solve(&model, &x_vec, &refs, cfg, weights, warm.as_ref())?;
            let u = sol.first_input();
            sqp_iterations += sol.iterations;
            max_kkt = max_kkt.max(sol.kkt_residual);
            predictor.applied(t, x, &u)?;
            warm = Some(sol);
            Ok(u)
        },
        wind,
        duration,
        cfg.dt,
    )?;
    let references: Vec<ReferenceState> = records
        .iter()
        .map(|r| trajectory.sample(r.t))
        .collect::<Result<_>>()?;
    let rmse = tracking_rmse(&records, &references);
    Ok(TrackLog {
        records,
        references,
        rmse,
        sqp_iterations,
        max_kkt_residual: max_kkt,
    })
}

#[cfg(test)]
mod tests;
