//! Adam training of the sequence model on the supervised loss plus the
//! physics-informed loss over nominal-model collocation windows.

use std::time::Instant;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{NormStats, FEATURE_SCALE_FLOOR, TARGET_SCALE_FLOOR, WindowSet, WindowTag};
use crate::dynamics::{nominal_derivative, rk4_step, ControlInput, Quat, State};
use crate::error::{Error, Result};
use crate::net::{ModelParams, NetConfig, Scratch, FEATURES, OUTPUTS};
use crate::util::par_map;

/// Windows per gradient chunk. Chunks are reduced in a fixed order, so the
/// result does not depend on the thread count.
const CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollocationMode {
    /// No physics term.
    Off,
    /// One collocation set drawn before training.
    Fixed,
    /// A fresh set every `resample_period` epochs.
    Resampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Weight of the physics-informed term.
    pub lambda: f64,
    pub collocation: CollocationMode,
    pub n_colloc: usize,
    pub resample_period: usize,
    /// Fraction of windows held out for validation.
    pub val_fraction: f64,
    /// Use every `window_stride`-th training window (1 = all).
    pub window_stride: usize,
    /// Apply the physical standard-deviation floors to the fitted statistics.
    pub scale_floors: bool,
    /// Integration step of collocation rollouts, s.
    pub dt: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lambda: 0.1,
            collocation: CollocationMode::Resampled,
            n_colloc: 2048,
            resample_period: 10,
            val_fraction: 0.1,
            window_stride: 1,
            scale_floors: true,
            dt: 0.02,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("train.lambda must be >= 0, got {}", self.lambda));
        }
        if self.batch_size < 1 {
            return bad("train.batch_size must be >= 1".into());
        }
        if self.resample_period < 1 {
            return bad("train.resample_period must be >= 1".into());
        }
        if self.n_colloc < 1 {
            return bad("train.n_colloc must be >= 1".into());
        }
        if self.window_stride < 1 {
            return bad("train.window_stride must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("train.learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("train: Adam needs beta1, beta2 in [0, 1) and eps > 0".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("train.val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        if !(self.dt > 0.0) {
            return bad(format!("train.dt must be > 0, got {}", self.dt));
        }
        Ok(())
    }
}

/// Nominal-model windows with their nominal targets, in raw units.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub windows: WindowSet,
    pub seed: u64,
}

impl CollocationSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Rotation angle in `[0, max]` with density `∝ sin²(θ/2)`, the marginal of
/// a uniformly random rotation.
fn sample_angle(rng: &mut impl Rng, max: f64) -> f64 {
    let peak = (0.5 * max).sin().powi(2);
    loop {
        let theta = rng.random_range(0.0..max);
        if rng.random_range(0.0..peak) <= (0.5 * theta).sin().powi(2) {
            return theta;
        }
    }
}

fn sample_axis(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Draw `n` random state-input samples and roll each forward under the
/// nominal model with the input held, producing `window`-frame sequences.
pub fn sample_collocation(n: usize, window: usize, dt: f64, seed: u64) -> Result<CollocationSet> {
    if n < 1 || window < 1 {
        return Err(Error::InvalidArgument("collocation needs n >= 1 and window >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = WindowSet::new(window);
    let mut frames = Vec::with_capacity(window * FEATURES);
    for i in 0..n {
        let axis = sample_axis(&mut rng);
        let angle = sample_angle(&mut rng, 30f64.to_radians());
        let v = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let thrust = rng.random_range(5.0..15.0);
        let rates = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let u = ControlInput { thrust, rates };
        let mut x = State {
            p: Vector3::zeros(),
            q: Quat::from_axis_angle(&axis, angle),
            v,
        };
        frames.clear();
        for k in 0..window {
            if k > 0 {
                x = rk4_step(nominal_derivative, &x, &u, dt)?;
            }
            let q = x.q;
            frames.extend_from_slice(&[q.w, q.x, q.y, q.z, x.v.x, x.v.y, x.v.z, thrust, rates.x, rates.y, rates.z]);
        }
        let dv = nominal_derivative(&x, &u)?.dv;
        set.push(&frames, [dv.x, dv.y, dv.z], WindowTag { rollout: i, end: window - 1 });
    }
    Ok(CollocationSet { windows: set, seed })
}

/// Mean squared error in normalized target space (mean over windows and
/// components) and its parameter gradient. `windows` must be normalized.
pub fn mse_and_gradient(params: &ModelParams, windows: &WindowSet, indices: &[usize]) -> Result<(f64, Vec<f64>)> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if windows.window != params.config().window {
        return Err(Error::shape(
            format!("{}-frame windows", params.config().window),
            format!("{}-frame windows", windows.window),
        ));
    }
    let scale = 2.0 / (OUTPUTS * indices.len()) as f64;
    let chunks: Vec<&[usize]> = indices.chunks(CHUNK).collect();
    let parts = par_map(&chunks, |chunk| -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; params.param_count()];
        let mut scratch = Scratch::default();
        let mut sse = 0.0;
        for &i in *chunk {
            let target = windows.target(i);
            params.forward_backward_normalized(
                windows.window_features(i),
                |y| {
                    let r: [f64; OUTPUTS] = std::array::from_fn(|k| y[k] - target[k]);
                    sse += r.iter().map(|v| v * v).sum::<f64>();
                    r.map(|v| v * scale)
                },
                &mut grad,
                &mut scratch,
            )?;
        }
        Ok((sse, grad))
    });
    let mut total = 0.0;
    let mut grad = vec![0.0; params.param_count()];
    for part in parts {
        let (sse, g) = part?;
        total += sse;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total / (OUTPUTS * indices.len()) as f64, grad))
}

/// Forward-only mean squared error in normalized target space.
pub fn mse(params: &ModelParams, windows: &WindowSet) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let idx: Vec<usize> = (0..windows.len()).collect();
    let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();
    let parts = par_map(&chunks, |chunk| -> Result<f64> {
        let mut scratch = Scratch::default();
        let mut sse = 0.0;
        for &i in *chunk {
            let y = params.forward_normalized(windows.window_features(i), &mut scratch)?;
            let t = windows.target(i);
            sse += (0..OUTPUTS).map(|k| (y[k] - t[k]).powi(2)).sum::<f64>();
        }
        Ok(sse)
    });
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / (OUTPUTS * windows.len()) as f64)
}

/// Supervised term on a normalized batch.
pub fn supervised_loss(params: &ModelParams, batch: &WindowSet) -> Result<(f64, Vec<f64>)> {
    let idx: Vec<usize> = (0..batch.len()).collect();
    mse_and_gradient(params, batch, &idx)
}

/// Physics term: the model against nominal targets on raw collocation windows.
pub fn physics_loss(params: &ModelParams, colloc: &CollocationSet) -> Result<(f64, Vec<f64>)> {
    supervised_loss(params, &params.norm.apply(&colloc.windows))
}

/// The three loss terms of one optimization step.
#[derive(Clone, Debug)]
pub struct LossTerms {
    pub supervised: f64,
    pub physics: f64,
    pub total: f64,
    pub gradient: Vec<f64>,
}

/// `L = L_SL + λ L_PI` on normalized batches; the physics term is skipped
/// entirely when `colloc` is `None` or `λ = 0`.
pub fn combined_loss(
    params: &ModelParams,
    data: &WindowSet,
    data_idx: &[usize],
    colloc: Option<(&WindowSet, &[usize])>,
    lambda: f64,
) -> Result<LossTerms> {
    let (supervised, mut gradient) = mse_and_gradient(params, data, data_idx)?;
    let mut physics = 0.0;
    if let Some((set, idx)) = colloc.filter(|_| lambda > 0.0) {
        let (l, g) = mse_and_gradient(params, set, idx)?;
        physics = l;
        for (a, b) in gradient.iter_mut().zip(&g) {
            *a += lambda * b;
        }
    }
    Ok(LossTerms {
        supervised,
        physics,
        total: supervised + lambda * physics,
        gradient,
    })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean supervised loss over the epoch's batches.
    pub supervised: f64,
    /// Physics loss over the full current collocation set, after the epoch.
    pub physics: f64,
    /// 3-D Euclidean RMSE on the held-out split, m/s².
    pub val_rmse: f64,
    /// Whether the collocation set was (re)drawn at the start of this epoch.
    pub resampled: bool,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Held-out RMSE of the initial parameters, m/s².
    pub initial_val_rmse: f64,
    pub train_windows: usize,
    pub val_windows: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,L_SL,L_PI,val_RMSE,resampled,wall_time\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                e.epoch, e.supervised, e.physics, e.val_rmse, e.resampled as u8, e.wall_time
            ));
        }
        s
    }
}

/// Euclidean RMSE in m/s² over a normalized window set.
pub fn rmse_raw(params: &ModelParams, normalized: &WindowSet) -> Result<f64> {
    if normalized.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // MSE per component in normalized space, rescaled per channel.
    let std = params.norm.target_std;
    let idx: Vec<usize> = (0..normalized.len()).collect();
    let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();
    let parts = par_map(&chunks, |chunk| -> Result<f64> {
        let mut scratch = Scratch::default();
        let mut sse = 0.0;
        for &i in *chunk {
            let y = params.forward_normalized(normalized.window_features(i), &mut scratch)?;
            let t = normalized.target(i);
            sse += (0..OUTPUTS).map(|k| ((y[k] - t[k]) * std[k]).powi(2)).sum::<f64>();
        }
        Ok(sse)
    });
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok((total / normalized.len() as f64).sqrt())
}

/// Seed of the collocation set drawn at `epoch`.
pub fn collocation_seed(seed: u64, epoch: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636f_6c6c_6f63);
    rng.set_stream(epoch as u64 + 1);
    rng.random()
}

/// Train a fresh model on raw (unnormalized) windows.
pub fn fit(windows: &WindowSet, net: &NetConfig, cfg: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    fit_with(windows, net, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    windows: &WindowSet,
    net: &NetConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    net.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if windows.window != net.window {
        return Err(Error::shape(format!("{}-frame windows", net.window), format!("{}-frame windows", windows.window)));
    }
    let start = Instant::now();

    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut split_rng);
    let n_val = ((windows.len() as f64) * cfg.val_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val.min(windows.len() - 1));
    let mut val_idx = val_idx.to_vec();
    val_idx.sort_unstable();
    let mut train_idx: Vec<usize> = train_idx.to_vec();
    train_idx.sort_unstable();
    let train_idx: Vec<usize> = train_idx.into_iter().step_by(cfg.window_stride).collect();

    let train_raw = windows.select(&train_idx);
    let mut norm = NormStats::fit(&train_raw)?;
    if cfg.scale_floors {
        norm = norm.with_floor(&FEATURE_SCALE_FLOOR, &TARGET_SCALE_FLOOR);
    }
    let train = norm.apply(&train_raw);
    let val = norm.apply(&windows.select(&val_idx));
    drop(train_raw);

    let mut params = ModelParams::init(net.clone(), norm)?;
    let mut adam = Adam::new(params.param_count());
    let mut log = TrainLog {
        epochs: Vec::with_capacity(cfg.epochs),
        initial_val_rmse: if val.is_empty() { f64::NAN } else { rmse_raw(&params, &val)? },
        train_windows: train.len(),
        val_windows: val.len(),
    };

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut colloc_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut colloc: Option<WindowSet> = None;
    let mut batch_order: Vec<usize> = (0..train.len()).collect();
    let mut colloc_order: Vec<usize> = Vec::new();

    for epoch in 0..cfg.epochs {
        let resampled = match cfg.collocation {
            CollocationMode::Off => false,
            CollocationMode::Fixed => epoch == 0,
            CollocationMode::Resampled => epoch % cfg.resample_period == 0,
        };
        if resampled {
            let set = sample_collocation(cfg.n_colloc, net.window, cfg.dt, collocation_seed(cfg.seed, epoch))?;
            colloc = Some(params.norm.apply(&set.windows));
        }

        batch_order.shuffle(&mut shuffle_rng);
        if let Some(c) = &colloc {
            colloc_order = (0..c.len()).collect();
            colloc_order.shuffle(&mut colloc_rng);
        }
        let mut sl_sum = 0.0;
        let mut batches = 0;
        let mut cpos = 0;
        for batch in batch_order.chunks(cfg.batch_size) {
            let cbatch = match &colloc {
                Some(c) if cfg.lambda > 0.0 => {
                    let take = cfg.batch_size.min(c.len());
                    if cpos + take > c.len() {
                        cpos = 0;
                    }
                    let idx = &colloc_order[cpos..cpos + take];
                    cpos += take;
                    Some((c, idx))
                }
                _ => None,
            };
            let terms = combined_loss(&params, &train, batch, cbatch, cfg.lambda)?;
            if !terms.total.is_finite() || terms.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.step(cfg, params.values_mut(), &terms.gradient);
            sl_sum += terms.supervised;
            batches += 1;
        }
        let physics = match &colloc {
            Some(c) => mse(&params, c)?,
            None => 0.0,
        };
        let val_rmse = if val.is_empty() { f64::NAN } else { rmse_raw(&params, &val)? };
        if !physics.is_finite() || (!val.is_empty() && !val_rmse.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let entry = EpochLog {
            epoch,
            supervised: sl_sum / batches as f64,
            physics,
            val_rmse,
            resampled,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rk4_step;

    fn tiny_net(window: usize) -> NetConfig {
        NetConfig {
            window,
            tcn_channels: 6,
            dilations: vec![1, 2],
            head: vec![8],
            seed: 3,
            ..NetConfig::default()
        }
    }

    /// Windows whose target is a fixed linear map of the last frame.
    fn linear_windows(n: usize, window: usize, seed: u64) -> WindowSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = WindowSet::new(window);
        for i in 0..n {
            let f: Vec<f64> = (0..window * FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
            let last = &f[(window - 1) * FEATURES..];
            let t = [
                2.0 * last[4] - last[7] + 0.5,
                -1.5 * last[5] + 0.3 * last[0],
                last[6] + last[8] - 9.81,
            ];
            set.push(&f, t, WindowTag { rollout: 0, end: i });
        }
        set
    }

    #[test]
    fn collocation_targets_and_consistency() {
        let dt = 0.02;
        let set = sample_collocation(50, 6, dt, 1).unwrap();
        assert_eq!(set.len(), 50);
        for i in 0..set.len() {
            let w = set.windows.window_features(i);
            let frame = |k: usize| &w[k * FEATURES..(k + 1) * FEATURES];
            let state = |k: usize| State {
                p: Vector3::zeros(),
                q: Quat::from_slice(&frame(k)[..4]),
                v: Vector3::new(frame(k)[4], frame(k)[5], frame(k)[6]),
            };
            let u = ControlInput::from_slice(&frame(0)[7..]);
            assert!(state(0).q.angle() <= 30f64.to_radians() + 1e-12);
            for k in 1..6 {
                let next = rk4_step(nominal_derivative, &state(k - 1), &u, dt).unwrap();
                assert!((next.v - state(k).v).amax() <= 1e-12);
                assert!((next.q.to_vector() - state(k).q.to_vector()).amax() <= 1e-12);
            }
            let dv = nominal_derivative(&state(5), &u).unwrap().dv;
            let t = set.windows.target(i);
            assert!((dv - Vector3::from(t)).amax() <= 1e-12);
        }
    }

    #[test]
    fn collocation_ranges_and_seeds() {
        let a = sample_collocation(200, 1, 0.02, 5).unwrap();
        for i in 0..a.len() {
            let f = a.windows.window_features(i);
            assert!(f[4..7].iter().all(|v| v.abs() <= 3.0));
            assert!((5.0..15.0).contains(&f[7]));
            assert!(f[8..11].iter().all(|v| v.abs() <= 2.0));
        }
        let b = sample_collocation(200, 1, 0.02, 6).unwrap();
        for i in 0..a.len() {
            for j in 0..b.len() {
                assert_ne!(a.windows.window_features(i), b.windows.window_features(j));
            }
        }
        assert_eq!(a, sample_collocation(200, 1, 0.02, 5).unwrap());
    }

    #[test]
    fn loss_convention() {
        let net = tiny_net(3);
        let n = net.layout().total;
        // All-zero model predicts 0 in normalized space.
        let p = ModelParams::from_values(net, vec![0.0; n], NormStats::default()).unwrap();
        let mut set = WindowSet::new(3);
        set.push(&[0.3; 33], [1.0, 0.0, 0.0], WindowTag { rollout: 0, end: 2 });
        let (l, _) = supervised_loss(&p, &set).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-15);

        let mut exact = WindowSet::new(3);
        exact.push(&[0.3; 33], [0.0; 3], WindowTag { rollout: 0, end: 2 });
        let (l, g) = supervised_loss(&p, &exact).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(supervised_loss(&p, &WindowSet::new(3)).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let net = tiny_net(5);
        let p = ModelParams::init(net, NormStats::default()).unwrap();
        let set = linear_windows(7, 5, 2);
        let colloc = CollocationSet {
            windows: set.clone(),
            seed: 0,
        };
        for physics in [false, true] {
            let (_, g) = if physics { physics_loss(&p, &colloc).unwrap() } else { supervised_loss(&p, &set).unwrap() };
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..30 {
                let i = rng.random_range(0..p.param_count());
                let h = 1e-5;
                let mut a = p.clone();
                a.values_mut()[i] += h;
                let mut b = p.clone();
                b.values_mut()[i] -= h;
                let f = |m: &ModelParams| supervised_loss(m, &set).unwrap().0;
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-4);
                assert!(err <= 1e-4, "coordinate {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn total_is_sum_of_terms() {
        let p = ModelParams::init(tiny_net(4), NormStats::default()).unwrap();
        let data = linear_windows(10, 4, 1);
        let coll = linear_windows(6, 4, 2);
        let di: Vec<usize> = (0..10).collect();
        let ci: Vec<usize> = (0..6).collect();
        let t = combined_loss(&p, &data, &di, Some((&coll, &ci)), 0.25).unwrap();
        let (sl, gs) = mse_and_gradient(&p, &data, &di).unwrap();
        let (pi, gp) = mse_and_gradient(&p, &coll, &ci).unwrap();
        assert_eq!(t.supervised, sl);
        assert_eq!(t.physics, pi);
        assert_eq!(t.total, sl + 0.25 * pi);
        for i in 0..gs.len() {
            assert_eq!(t.gradient[i], gs[i] + 0.25 * gp[i]);
        }
    }

    fn quick(collocation: CollocationMode, lambda: f64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            learning_rate: 3e-3,
            lambda,
            collocation,
            n_colloc: 64,
            resample_period: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_linear_map() {
        let net = NetConfig {
            window: 2,
            tcn_channels: 16,
            dilations: vec![1],
            head: vec![32],
            ..NetConfig::default()
        };
        let data = linear_windows(1000, 2, 4);
        let (_, log) = fit(&data, &net, &quick(CollocationMode::Off, 0.0, 50)).unwrap();
        let last = log.epochs.last().unwrap().val_rmse;
        assert!(log.initial_val_rmse / last >= 10.0, "{} -> {}", log.initial_val_rmse, last);
    }

    #[test]
    fn training_is_deterministic() {
        let data = linear_windows(200, 4, 1);
        let cfg = quick(CollocationMode::Resampled, 0.1, 4);
        let (a, la) = fit(&data, &tiny_net(4), &cfg).unwrap();
        let (b, lb) = fit(&data, &tiny_net(4), &cfg).unwrap();
        assert_eq!(a, b);
        for (x, y) in la.epochs.iter().zip(&lb.epochs) {
            assert_eq!((x.supervised, x.physics, x.val_rmse), (y.supervised, y.physics, y.val_rmse));
        }
    }

    #[test]
    fn zero_lambda_matches_supervised_only() {
        let data = linear_windows(200, 4, 1);
        let (a, _) = fit(&data, &tiny_net(4), &quick(CollocationMode::Resampled, 0.0, 4)).unwrap();
        let (b, _) = fit(&data, &tiny_net(4), &quick(CollocationMode::Off, 0.0, 4)).unwrap();
        assert_eq!(a.values(), b.values());
        let (c, _) = fit(&data, &tiny_net(4), &quick(CollocationMode::Resampled, 0.5, 4)).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn resampling_happens_on_schedule() {
        let data = linear_windows(100, 4, 1);
        let (_, log) = fit(&data, &tiny_net(4), &quick(CollocationMode::Resampled, 0.1, 8)).unwrap();
        let flags: Vec<bool> = log.epochs.iter().map(|e| e.resampled).collect();
        assert_eq!(flags, [true, false, false, true, false, false, true, false]);
        let (_, log) = fit(&data, &tiny_net(4), &quick(CollocationMode::Fixed, 0.1, 4)).unwrap();
        assert_eq!(log.epochs.iter().filter(|e| e.resampled).count(), 1);
        assert_ne!(collocation_seed(0, 0), collocation_seed(0, 3));
    }

    #[test]
    fn diverging_run_reports_epoch() {
        let data = linear_windows(64, 4, 1);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            ..quick(CollocationMode::Off, 0.0, 5)
        };
        let r = fit(&data, &tiny_net(4), &cfg);
        assert!(matches!(r, Err(Error::NonFiniteLoss { .. })), "{r:?}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { lambda: -1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { resample_period: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
