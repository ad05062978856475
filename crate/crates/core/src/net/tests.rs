use super::*;
use rand::Rng;

fn small_tcn() -> NetConfig {
    NetConfig {
        window: 8,
        tcn_channels: 5,
        dilations: vec![1, 2],
        head: vec![6],
        seed: 11,
        ..NetConfig::default()
    }
}

fn small_mlp() -> NetConfig {
    NetConfig {
        window: 4,
        mlp_hidden: vec![7, 5],
        seed: 12,
        ..NetConfig::mlp()
    }
}

fn odd_norm() -> NormStats {
    NormStats {
        target_mean: [0.5, -1.0, 9.0],
        target_std: [2.0, 0.5, 3.0],
        ..NormStats::default()
    }
}

fn random_windows(cfg: &NetConfig, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * cfg.input_len()).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// Plain full-length causal TCN written directly from the definition, with
/// explicit zero padding and no trailing-frame pruning.
fn reference_tcn(params: &ModelParams, window: &[f64]) -> [f64; 3] {
    let cfg = params.config();
    let t = cfg.window;
    let vals = params.values();
    let find = |name: &str| params.layout().layers.iter().find(|l| l.name == name).map(|l| l.offset);
    let mut x: Vec<Vec<f64>> = (0..FEATURES).map(|c| (0..t).map(|j| window[j * FEATURES + c]).collect()).collect();
    for (b, &d) in cfg.dilations.iter().enumerate() {
        let inp = x.len();
        let c_out = cfg.tcn_channels;
        let w = find(&format!("tcn{b}.weight")).unwrap();
        let bias = find(&format!("tcn{b}.bias")).unwrap();
        let skip = find(&format!("tcn{b}.skip"));
        let mut y = vec![vec![0.0; t]; c_out];
        for (c, yc) in y.iter_mut().enumerate() {
            for (j, yv) in yc.iter_mut().enumerate() {
                let mut acc = vals[bias + c];
                for (ci, xc) in x.iter().enumerate() {
                    for kk in 0..cfg.kernel {
                        let back = (cfg.kernel - 1 - kk) * d;
                        if j >= back {
                            acc += vals[w + (c * inp + ci) * cfg.kernel + kk] * xc[j - back];
                        }
                    }
                    acc += match skip {
                        Some(s) => vals[s + c * inp + ci] * xc[j],
                        None if ci == c => xc[j],
                        None => 0.0,
                    };
                }
                *yv = acc.max(0.0);
            }
        }
        x = y;
    }
    let mut h: Vec<f64> = x.iter().map(|c| c[t - 1]).collect();
    let n = cfg.head.len() + 1;
    for i in 0..n {
        let w = find(&format!("head{i}.weight")).unwrap();
        let b = find(&format!("head{i}.bias")).unwrap();
        let out = if i + 1 == n { OUTPUTS } else { cfg.head[i] };
        h = (0..out)
            .map(|o| {
                let v = vals[b + o] + (0..h.len()).map(|k| vals[w + o * h.len() + k] * h[k]).sum::<f64>();
                if i + 1 < n { v.max(0.0) } else { v }
            })
            .collect();
    }
    params.norm.denormalize_target(&[h[0], h[1], h[2]])
}

#[test]
fn default_config_shape() {
    let cfg = NetConfig::default();
    assert_eq!(cfg.receptive_field(), 15);
    let layout = cfg.layout();
    // 32·11·3 + 32 + 32·11, then two 32·32·3 + 32 blocks, then the head.
    let tcn = (32 * 11 * 3 + 32 + 32 * 11) + 2 * (32 * 32 * 3 + 32);
    let head = (64 * 32 + 64) + (64 * 64 + 64) + (3 * 64 + 3);
    assert_eq!(layout.total, tcn + head);
    assert_eq!(layout.hash(), NetConfig::default().layout().hash());
    assert_eq!(NetConfig::mlp().layout().total, 220 * 128 + 128 + 128 * 128 + 128 + 128 * 64 + 64 + 64 * 3 + 3);
}

#[test]
fn matches_unpruned_reference() {
    for cfg in [small_tcn(), NetConfig::default(), NetConfig { window: 3, ..NetConfig::default() }] {
        let p = ModelParams::init(cfg.clone(), odd_norm()).unwrap();
        let w = random_windows(&cfg, 4, 5);
        for win in w.chunks(cfg.input_len()) {
            let a = p.forward(win).unwrap();
            let b = reference_tcn(&p, win);
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() <= 1e-12 * (1.0 + b[i].abs()), "{a:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn zero_weights_give_target_mean() {
    for cfg in [small_tcn(), small_mlp()] {
        let n = cfg.layout().total;
        let p = ModelParams::from_values(cfg.clone(), vec![0.0; n], odd_norm()).unwrap();
        let y = p.forward(&random_windows(&cfg, 1, 1)).unwrap();
        assert_eq!(y, odd_norm().target_mean);
    }
}

#[test]
fn frames_outside_receptive_field_are_ignored() {
    let cfg = NetConfig::default();
    let p = ModelParams::init(cfg.clone(), NormStats::default()).unwrap();
    let w = random_windows(&cfg, 1, 2);
    let base = p.forward(&w).unwrap();
    let rf = cfg.receptive_field();
    for frame in 0..cfg.window {
        let mut w2 = w.clone();
        for c in 0..FEATURES {
            w2[frame * FEATURES + c] += 3.0;
        }
        let y = p.forward(&w2).unwrap();
        if frame < cfg.window - rf {
            assert_eq!(y, base, "frame {frame} leaked");
        } else if frame == cfg.window - 1 {
            assert_ne!(y, base);
        }
    }
}

#[test]
fn shape_errors() {
    let cfg = small_tcn();
    let p = ModelParams::init(cfg.clone(), NormStats::default()).unwrap();
    assert!(matches!(p.forward(&[0.0; 10]), Err(Error::ShapeMismatch { .. })));
    assert!(p.forward_batch(&vec![0.0; cfg.input_len() + 1]).is_err());
    assert!(p.backward(&vec![0.0; cfg.input_len()], &[]).is_err());
}

#[test]
fn batch_matches_rows_and_permutes() {
    for cfg in [small_tcn(), small_mlp()] {
        let p = ModelParams::init(cfg.clone(), odd_norm()).unwrap();
        let len = cfg.input_len();
        let w = random_windows(&cfg, 5, 9);
        let batch = p.forward_batch(&w).unwrap();
        for (i, win) in w.chunks(len).enumerate() {
            assert_eq!(batch[i], p.forward(win).unwrap());
        }
        let order = [3, 0, 4, 1, 2];
        let permuted: Vec<f64> = order.iter().flat_map(|&i| w[i * len..(i + 1) * len].to_vec()).collect();
        let pb = p.forward_batch(&permuted).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(pb[k], batch[i]);
        }
        assert_eq!(p.forward_batch(&w[..len]).unwrap()[0], p.forward(&w[..len]).unwrap());
    }
}

fn objective(p: &ModelParams, windows: &[f64], cots: &[[f64; 3]]) -> f64 {
    p.forward_batch(windows)
        .unwrap()
        .iter()
        .zip(cots)
        .map(|(y, c)| y[0] * c[0] + y[1] * c[1] + y[2] * c[2])
        .sum()
}

/// Worst relative error between `backward` and central differences.
fn gradient_check(cfg: NetConfig, coords: usize) -> f64 {
    let p = ModelParams::init(cfg.clone(), odd_norm()).unwrap();
    let windows = random_windows(&cfg, 3, 21);
    let cots = [[1.0, -0.5, 0.25], [0.3, 0.7, -1.1], [-0.2, 0.0, 0.9]];
    let grad = p.backward(&windows, &cots).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let i = rng.random_range(0..p.param_count());
        let mut plus = p.clone();
        plus.values_mut()[i] += h;
        let mut minus = p.clone();
        minus.values_mut()[i] -= h;
        let fd = (objective(&plus, &windows, &cots) - objective(&minus, &windows, &cots)) / (2.0 * h);
        // ReLU kinks make a few coordinates non-differentiable at the
        // sampled point; the scale term keeps near-zero entries meaningful.
        let err = (fd - grad[i]).abs() / (fd.abs().max(grad[i].abs()).max(1e-3));
        worst = worst.max(err);
    }
    worst
}

#[test]
fn tcn_gradient_matches_finite_differences() {
    let worst = gradient_check(NetConfig::default(), 100);
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let worst = gradient_check(NetConfig::mlp(), 100);
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn backward_is_linear_in_cotangent() {
    let cfg = small_tcn();
    let p = ModelParams::init(cfg.clone(), odd_norm()).unwrap();
    let w = random_windows(&cfg, 2, 3);
    let a = [[1.0, 2.0, -1.0], [0.5, 0.0, 0.1]];
    let b = [[-0.3, 0.4, 2.0], [1.0, -1.0, 0.0]];
    let ab: Vec<[f64; 3]> = (0..2).map(|i| std::array::from_fn(|k| a[i][k] + b[i][k])).collect();
    let ga = p.backward(&w, &a).unwrap();
    let gb = p.backward(&w, &b).unwrap();
    let gab = p.backward(&w, &ab).unwrap();
    for i in 0..ga.len() {
        assert!((gab[i] - ga[i] - gb[i]).abs() <= 1e-10);
    }
    assert!(p.backward(&w, &[[0.0; 3]; 2]).unwrap().iter().all(|g| *g == 0.0));
}

#[test]
fn tensors_round_trip() {
    for cfg in [small_tcn(), small_mlp()] {
        let p = ModelParams::init(cfg.clone(), odd_norm()).unwrap();
        let back = ModelParams::from_tensors(cfg.clone(), &p.tensors(), odd_norm()).unwrap();
        assert_eq!(back, p);
        let mut bad = p.tensors();
        bad[0].shape[0] += 1;
        assert!(ModelParams::from_tensors(cfg, &bad, odd_norm()).is_err());
    }
}

#[test]
fn init_is_seeded() {
    let a = ModelParams::init(small_tcn(), NormStats::default()).unwrap();
    let b = ModelParams::init(small_tcn(), NormStats::default()).unwrap();
    assert_eq!(a, b);
    let c = ModelParams::init(NetConfig { seed: 99, ..small_tcn() }, NormStats::default()).unwrap();
    assert_ne!(a, c);
    // Output biases start at zero.
    let last = a.layout().layers.last().unwrap();
    assert!(a.values()[last.offset..].iter().all(|v| *v == 0.0));
}

#[test]
fn checkpoint_round_trip_and_validation() {
    let p = ModelParams::init(small_tcn(), odd_norm()).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&p, &mut bytes).unwrap();
    assert_eq!(read_checkpoint(bytes.as_slice()).unwrap(), p);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&p, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), p);
    assert_eq!(std::fs::read(&path).unwrap(), bytes);

    let mut truncated = bytes.clone();
    truncated.truncate(bytes.len() - 8);
    assert!(read_checkpoint(truncated.as_slice()).is_err());
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let tampered = text.replacen("tcn0.bias", "tcn0.bia5", 1);
    assert!(read_checkpoint(tampered.as_bytes()).is_err());
}

#[test]
fn default_batch_forward_is_fast() {
    let cfg = NetConfig::default();
    let p = ModelParams::init(cfg.clone(), NormStats::default()).unwrap();
    let w = random_windows(&cfg, 256, 8);
    let start = std::time::Instant::now();
    let y = p.forward_batch(&w).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(y.len(), 256);
    assert!(elapsed.as_secs_f64() < 0.05, "{elapsed:?}");
}
