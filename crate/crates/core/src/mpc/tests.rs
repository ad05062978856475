use super::*;
use crate::dynamics::GRAVITY;
use crate::trajectory::TrajectoryKind;

/// `x⁺ = x`.
struct Frozen;

impl DiscreteModel for Frozen {
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn step(&self, x: &DVector<f64>, _u: &DVector<f64>, _dt: f64) -> Result<DVector<f64>> {
        Ok(x.clone())
    }
}

/// Exact discretization of `p̈ = a`.
struct DoubleIntegrator;

impl DoubleIntegrator {
    fn matrices(dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]),
        )
    }
}

impl DiscreteModel for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        let (a, b) = Self::matrices(dt);
        Ok(a * x + b * u)
    }
}

fn hover_refs(h: usize) -> Vec<RefPoint> {
    let r = ReferenceState {
        p: Vector3::new(0.0, 0.0, 1.0),
        v: Vector3::zeros(),
        q: crate::dynamics::Quat::IDENTITY,
        rates: Vector3::zeros(),
        thrust: GRAVITY,
    };
    vec![RefPoint::from(&r); h + 1]
}

#[test]
fn frozen_model_linearizes_to_identity() {
    let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
    let u = DVector::from_vec(vec![0.5, 0.1]);
    let lin = linearize_dynamics(&Frozen, &x, &u, 0.1).unwrap();
    assert!((lin.a - DMatrix::identity(3, 3)).amax() < 1e-9);
    assert!(lin.b.amax() < 1e-12);
    assert_eq!(lin.offset, x);
}

#[test]
fn nominal_jacobian_blocks_at_hover() {
    let dt = 0.02;
    let x = DVector::from_row_slice(&State::hover_at(Vector3::new(0.0, 0.0, 1.0)).to_array());
    let u = DVector::from_row_slice(&ControlInput::hover().to_array());
    let lin = linearize_dynamics(&QuadrotorModel::nominal(), &x, &u, dt).unwrap();
    // Position rows against velocity columns: dt·I to first order.
    let pv = lin.a.view((0, 7), (3, 3)).into_owned();
    assert!((pv - DMatrix::identity(3, 3) * dt).amax() < 1e-8);
    // Thrust only moves velocity and position along z at hover.
    assert!((lin.b[(9, 0)] - dt).abs() < 1e-8);
    assert!((lin.b[(2, 0)] - 0.5 * dt * dt).abs() < 1e-8);
    for r in [0, 1, 3, 4, 5, 6, 7, 8] {
        assert!(lin.b[(r, 0)].abs() < 1e-8, "row {r}");
    }
}

#[test]
fn hover_is_stationary_point() {
    let cfg = MpcConfig::default();
    let weights = MpcWeights {
        r: vec![0.0; 4],
        ..Default::default()
    };
    let refs = hover_refs(cfg.horizon);
    let sol = solve(&QuadrotorModel::nominal(), &refs[0].x, &refs, &cfg, &weights, None).unwrap();
    assert!((&sol.inputs[0] - DVector::from_row_slice(&[GRAVITY, 0.0, 0.0, 0.0])).amax() < 1e-12);
    assert!(sol.cost <= 1e-10);
}

#[test]
fn horizon_mismatch_is_reported() {
    let cfg = MpcConfig::default();
    let refs = hover_refs(cfg.horizon - 1);
    let r = solve(&QuadrotorModel::nominal(), &refs[0].x, &refs, &cfg, &MpcWeights::default(), None);
    assert!(matches!(r, Err(Error::HorizonMismatch { expected: 21, got: 20 })));
}

/// Dense least-squares solution of the unconstrained LTI tracking problem,
/// built from explicit matrix powers.
fn dense_oracle(
    x0: &DVector<f64>,
    refs: &[RefPoint],
    q: &[f64],
    r: &[f64],
    dt: f64,
) -> DVector<f64> {
    let (a, b) = DoubleIntegrator::matrices(dt);
    let h = refs.len() - 1;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for k in 1..=h {
        let ak = a.pow(k as u32);
        let free = &ak * x0;
        for s in 0..2 {
            let w = q[s].sqrt();
            let mut coeffs = vec![0.0; h];
            for (j, c) in coeffs.iter_mut().enumerate().take(k) {
                let g = a.pow((k - 1 - j) as u32) * &b;
                *c = w * g[(s, 0)];
            }
            rows.push((coeffs, w * (refs[k].x[s] - free[s])));
        }
    }
    for j in 0..h {
        let mut coeffs = vec![0.0; h];
        coeffs[j] = r[0].sqrt();
        rows.push((coeffs, r[0].sqrt() * refs[j].u[0]));
    }
    let m = DMatrix::from_fn(rows.len(), h, |i, j| rows[i].0[j]);
    let rhs = DVector::from_fn(rows.len(), |i, _| rows[i].1);
    m.svd(true, true).solve(&rhs, 1e-14).unwrap()
}

#[test]
fn double_integrator_matches_dense_least_squares() {
    let dt = 0.1;
    let cfg = MpcConfig {
        horizon: 5,
        dt,
        u_min: vec![-1e6],
        u_max: vec![1e6],
        max_sqp_iters: 5,
        kkt_tol: 1e-9,
        line_search: LineSearch::default(),
    };
    let weights = MpcWeights {
        q: vec![3.0, 0.5],
        r: vec![0.2],
        q_terminal: None,
    };
    let refs: Vec<RefPoint> = (0..=5)
        .map(|k| RefPoint {
            x: DVector::from_vec(vec![0.2 * k as f64, 1.0]),
            u: DVector::from_vec(vec![0.1]),
        })
        .collect();
    let x0 = DVector::from_vec(vec![-0.5, 0.3]);
    let sol = solve(&DoubleIntegrator, &x0, &refs, &cfg, &weights, None).unwrap();
    let oracle = dense_oracle(&x0, &refs, &weights.q, &weights.r, dt);
    for j in 0..5 {
        assert!((sol.inputs[j][0] - oracle[j]).abs() < 1e-6, "u{j}: {} vs {}", sol.inputs[j][0], oracle[j]);
    }
}

#[test]
fn input_bounds_are_respected() {
    let cfg = MpcConfig::default();
    // Reference far above: the solver wants full thrust.
    let mut refs = hover_refs(cfg.horizon);
    for r in refs.iter_mut() {
        r.x[2] = 50.0;
    }
    let x0 = DVector::from_row_slice(&State::hover_at(Vector3::new(0.0, 0.0, 1.0)).to_array());
    let sol = solve(&QuadrotorModel::nominal(), &x0, &refs, &cfg, &MpcWeights::default(), None).unwrap();
    for u in &sol.inputs {
        for c in 0..4 {
            assert!(u[c] >= cfg.u_min[c] - 1e-12 && u[c] <= cfg.u_max[c] + 1e-12);
        }
    }
    assert!((sol.inputs[0][0] - cfg.u_max[0]).abs() < 1e-9);
}

#[test]
fn circle_instance_converges() {
    let cfg = MpcConfig::default();
    let weights = MpcWeights::default();
    let traj = Trajectory::with_defaults(TrajectoryKind::Circle);
    let refs: Vec<RefPoint> = traj.horizon(0.0, cfg.horizon, cfg.dt).unwrap().iter().map(RefPoint::from).collect();
    let model = QuadrotorModel::nominal();
    let x0 = DVector::from_row_slice(&traj.initial_state().to_array());
    let sol = solve(&model, &x0, &refs, &cfg, &weights, None).unwrap();
    assert!(sol.kkt_residual <= cfg.kkt_tol, "kkt {}", sol.kkt_residual);
    assert!(sol.iterations <= cfg.max_sqp_iters);
    assert!(sol.max_defect(&model, cfg.dt).unwrap() <= 1e-6);

    // Warm-started solve one step later improves on its own warm start.
    let refs1: Vec<RefPoint> = traj.horizon(cfg.dt, cfg.horizon, cfg.dt).unwrap().iter().map(RefPoint::from).collect();
    let sol1 = solve(&model, &sol.states[1], &refs1, &cfg, &weights, Some(&sol)).unwrap();
    let mut shifted: Vec<DVector<f64>> = sol.inputs[1..].to_vec();
    shifted.push(sol.inputs[cfg.horizon - 1].clone());
    let p = Problem {
        model: &model,
        refs: &refs1,
        cfg: &cfg,
        q: DVector::from_row_slice(&weights.q),
        qt: DVector::from_row_slice(weights.terminal()),
        r: DVector::from_row_slice(&weights.r),
    };
    let warm_cost = p.cost(&p.rollout(&sol.states[1], &shifted).unwrap(), &shifted);
    assert!(sol1.cost <= warm_cost);
}

#[test]
fn short_calm_track_is_accurate() {
    let traj = Trajectory::with_defaults(TrajectoryKind::Circle);
    let log = track(
        &traj,
        &mut NominalPrediction,
        &WindField::calm(),
        &MpcConfig::default(),
        &MpcWeights::default(),
        2.0,
    )
    .unwrap();
    assert_eq!(log.records.len(), 100);
    assert!(log.rmse < 0.05, "rmse {}", log.rmse);
    assert!((tracking_rmse(&log.records, &log.references) - log.rmse).abs() == 0.0);
}

#[test]
fn config_validation() {
    let mut cfg = MpcConfig::default();
    assert!(cfg.validate(4).is_ok());
    cfg.u_min[0] = 30.0;
    assert!(cfg.validate(4).is_err());
    let cfg = MpcConfig {
        horizon: 0,
        ..Default::default()
    };
    assert!(cfg.validate(4).is_err());
    let w = MpcWeights {
        r: vec![0.1, -0.2, 0.2, 0.2],
        ..Default::default()
    };
    assert!(w.validate(10, 4).is_err());
}
