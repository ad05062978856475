//! Sequence model mapping an `11 × T` history window (quaternion, velocity,
//! input per frame) to the velocity derivative at the window's last frame.
//!
//! Two backbones share the parameter/layout machinery:
//!
//! * `Tcn`: residual blocks of one dilated causal convolution each, then an
//!   MLP head on the last frame's feature vector. Only the trailing frames
//!   that can reach the head are ever computed.
//! * `Mlp`: the flattened window through a plain MLP.
//!
//! Gradients are hand-written reverse mode over the same cached activations
//! the forward pass produces.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::NormStats;
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

/// Channels per frame: quaternion (4), velocity (3), input (4).
pub const FEATURES: usize = 11;
/// Network outputs: the velocity derivative.
pub const OUTPUTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    Tcn,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub backbone: Backbone,
    /// History length `T`, frames.
    pub window: usize,
    pub tcn_channels: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    /// Hidden sizes of the head after the TCN encoder.
    pub head: Vec<usize>,
    /// Hidden sizes of the MLP backbone.
    pub mlp_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Tcn,
            window: 20,
            tcn_channels: 32,
            kernel: 3,
            dilations: vec![1, 2, 4],
            head: vec![64, 64],
            mlp_hidden: vec![128, 128, 64],
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn mlp() -> Self {
        Self {
            backbone: Backbone::Mlp,
            ..Self::default()
        }
    }

    /// Trailing frames that can influence the output.
    pub fn receptive_field(&self) -> usize {
        match self.backbone {
            Backbone::Tcn => 1 + self.dilations.iter().map(|d| (self.kernel - 1) * d).sum::<usize>(),
            Backbone::Mlp => self.window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.window < 1 {
            return bad("net.window must be >= 1");
        }
        match self.backbone {
            Backbone::Tcn => {
                if self.tcn_channels < 1 || self.kernel < 1 || self.dilations.is_empty() {
                    return bad("net: TCN needs channels >= 1, kernel >= 1 and at least one block");
                }
                if self.dilations.contains(&0) {
                    return bad("net.dilations must be >= 1");
                }
            }
            Backbone::Mlp => {}
        }
        if self.head.contains(&0) || self.mlp_hidden.contains(&0) {
            return bad("net: hidden layer sizes must be >= 1");
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        FEATURES * self.window
    }

    fn plan(&self) -> Plan {
        let mut layout = Layout::default();
        let mut convs = Vec::new();
        let mut dense = Vec::new();
        let dense_inputs = match self.backbone {
            Backbone::Tcn => {
                let c = self.tcn_channels;
                let t = self.window;
                let k = self.kernel;
                let mut tail: usize = 1 + self.dilations.iter().map(|d| (k - 1) * d).sum::<usize>();
                let mut len_in = tail.min(t);
                let mut inp = FEATURES;
                for (b, &d) in self.dilations.iter().enumerate() {
                    tail -= (k - 1) * d;
                    let len_out = tail.min(t);
                    let w = layout.push(&format!("tcn{b}.weight"), &[c, inp, k]);
                    let bias = layout.push(&format!("tcn{b}.bias"), &[c]);
                    let skip = (inp != c).then(|| layout.push(&format!("tcn{b}.skip"), &[c, inp]));
                    convs.push(Conv {
                        w,
                        b: bias,
                        skip,
                        inp,
                        out: c,
                        kernel: k,
                        dilation: d,
                        len_in,
                        len_out,
                    });
                    inp = c;
                    len_in = len_out;
                }
                (c, &self.head, "head")
            }
            Backbone::Mlp => (self.input_len(), &self.mlp_hidden, "mlp"),
        };
        let (mut inp, hidden, prefix) = dense_inputs;
        for (i, &h) in hidden.iter().chain(std::iter::once(&OUTPUTS)).enumerate() {
            let w = layout.push(&format!("{prefix}{i}.weight"), &[h, inp]);
            let b = layout.push(&format!("{prefix}{i}.bias"), &[h]);
            dense.push(Dense { w, b, inp, out: h });
            inp = h;
        }
        Plan {
            backbone: self.backbone,
            window: self.window,
            convs,
            dense,
            layout,
        }
    }

    pub fn layout(&self) -> Layout {
        self.plan().layout
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Names, shapes and offsets of every tensor in the flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub layers: Vec<LayerShape>,
    pub total: usize,
}

impl Layout {
    fn push(&mut self, name: &str, shape: &[usize]) -> usize {
        let offset = self.total;
        let entry = LayerShape {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        };
        self.total += entry.len();
        self.layers.push(entry);
        offset
    }

    /// SHA-256 of the canonical `name:shape` listing, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            let dims: Vec<String> = l.shape.iter().map(|d| d.to_string()).collect();
            h.update(format!("{}:{}@{};", l.name, dims.join("x"), l.offset).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One named tensor of a flattened parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: usize,
    b: usize,
    skip: Option<usize>,
    inp: usize,
    out: usize,
    kernel: usize,
    dilation: usize,
    len_in: usize,
    len_out: usize,
}

impl Conv {
    /// Input index offset of tap `kk` relative to the output position.
    fn shift(&self, kk: usize) -> isize {
        (self.len_in - self.len_out) as isize - ((self.kernel - 1 - kk) * self.dilation) as isize
    }
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

#[derive(Clone, Debug)]
struct Plan {
    backbone: Backbone,
    window: usize,
    convs: Vec<Conv>,
    dense: Vec<Dense>,
    layout: Layout,
}

/// Activations cached by a forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    /// Per conv block: its channel-major input; the last entry is the final block output.
    conv_acts: Vec<Vec<f64>>,
    /// Per dense layer: its input; the last entry is the raw output.
    dense_acts: Vec<Vec<f64>>,
    grad_bufs: Vec<Vec<f64>>,
}

impl Plan {
    fn forward(&self, params: &[f64], window: &[f64], s: &mut Scratch) -> [f64; OUTPUTS] {
        let t = self.window;
        let feature: Vec<f64> = match self.backbone {
            Backbone::Tcn => {
                s.conv_acts.resize(self.convs.len() + 1, Vec::new());
                let len0 = self.convs[0].len_in;
                let input = &mut s.conv_acts[0];
                input.clear();
                input.resize(FEATURES * len0, 0.0);
                for j in 0..len0 {
                    let frame = &window[(t - len0 + j) * FEATURES..][..FEATURES];
                    for (c, v) in frame.iter().enumerate() {
                        input[c * len0 + j] = *v;
                    }
                }
                for (l, conv) in self.convs.iter().enumerate() {
                    let (head, tail) = s.conv_acts.split_at_mut(l + 1);
                    conv_forward(conv, params, &head[l], &mut tail[0]);
                }
                let last = &s.conv_acts[self.convs.len()];
                let len = self.convs.last().unwrap().len_out;
                (0..self.convs.last().unwrap().out).map(|c| last[c * len + len - 1]).collect()
            }
            Backbone::Mlp => window.to_vec(),
        };
        s.dense_acts.resize(self.dense.len() + 1, Vec::new());
        s.dense_acts[0] = feature;
        for (i, d) in self.dense.iter().enumerate() {
            let relu = i + 1 < self.dense.len();
            let (head, tail) = s.dense_acts.split_at_mut(i + 1);
            dense_forward(d, params, &head[i], &mut tail[0], relu);
        }
        let y = &s.dense_acts[self.dense.len()];
        [y[0], y[1], y[2]]
    }

    /// Accumulate `∂(cotᵀ y)/∂θ` into `grad` using the activations in `s`.
    fn backward(&self, params: &[f64], s: &mut Scratch, cot: &[f64; OUTPUTS], grad: &mut [f64]) {
        let nd = self.dense.len();
        let mut dy = cot.to_vec();
        for i in (0..nd).rev() {
            let d = &self.dense[i];
            let input = &s.dense_acts[i];
            let need_input_grad = i > 0 || self.backbone == Backbone::Tcn;
            let mut dx = if need_input_grad { vec![0.0; d.inp] } else { Vec::new() };
            for o in 0..d.out {
                let g = dy[o];
                if g == 0.0 {
                    continue;
                }
                grad[d.b + o] += g;
                let row = d.w + o * d.inp;
                for (gw, x) in grad[row..row + d.inp].iter_mut().zip(input) {
                    *gw += g * x;
                }
                if need_input_grad {
                    for (dxi, w) in dx.iter_mut().zip(&params[row..row + d.inp]) {
                        *dxi += g * w;
                    }
                }
            }
            if i > 0 {
                // Input of layer i is the ReLU output of layer i - 1.
                for (dxi, x) in dx.iter_mut().zip(input) {
                    if *x <= 0.0 {
                        *dxi = 0.0;
                    }
                }
            }
            dy = dx;
        }
        if self.backbone == Backbone::Mlp {
            return;
        }

        let nc = self.convs.len();
        s.grad_bufs.resize(nc + 1, Vec::new());
        let last = &self.convs[nc - 1];
        let gout = &mut s.grad_bufs[nc];
        gout.clear();
        gout.resize(last.out * last.len_out, 0.0);
        for c in 0..last.out {
            gout[c * last.len_out + last.len_out - 1] = dy[c];
        }
        for l in (0..nc).rev() {
            let conv = &self.convs[l];
            let (lower, upper) = s.grad_bufs.split_at_mut(l + 1);
            let gin = if l > 0 { Some(&mut lower[l]) } else { None };
            conv_backward(
                conv,
                params,
                &s.conv_acts[l],
                &s.conv_acts[l + 1],
                &mut upper[0],
                gin,
                grad,
            );
        }
    }
}

fn dense_forward(d: &Dense, params: &[f64], x: &[f64], y: &mut Vec<f64>, relu: bool) {
    y.clear();
    y.extend_from_slice(&params[d.b..d.b + d.out]);
    for (o, yo) in y.iter_mut().enumerate() {
        let row = &params[d.w + o * d.inp..][..d.inp];
        let mut acc = 0.0;
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        *yo += acc;
        if relu && *yo < 0.0 {
            *yo = 0.0;
        }
    }
}

fn conv_forward(conv: &Conv, params: &[f64], x: &[f64], y: &mut Vec<f64>) {
    let (li, lo, k) = (conv.len_in, conv.len_out, conv.kernel);
    let offset = li - lo;
    y.clear();
    y.resize(conv.out * lo, 0.0);
    for c in 0..conv.out {
        let yc = &mut y[c * lo..(c + 1) * lo];
        yc.fill(params[conv.b + c]);
        for ci in 0..conv.inp {
            let xc = &x[ci * li..(ci + 1) * li];
            for kk in 0..k {
                let w = params[conv.w + (c * conv.inp + ci) * k + kk];
                let s = conv.shift(kk);
                let j0 = (-s).max(0) as usize;
                if j0 >= lo {
                    continue;
                }
                let src = &xc[(j0 as isize + s) as usize..];
                for (yv, xv) in yc[j0..].iter_mut().zip(src) {
                    *yv += w * xv;
                }
            }
            match conv.skip {
                Some(sk) => {
                    let w = params[sk + c * conv.inp + ci];
                    for (yv, xv) in yc.iter_mut().zip(&xc[offset..]) {
                        *yv += w * xv;
                    }
                }
                None if ci == c => {
                    for (yv, xv) in yc.iter_mut().zip(&xc[offset..]) {
                        *yv += xv;
                    }
                }
                None => {}
            }
        }
        for v in yc.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// `gy` holds the gradient w.r.t. the block output on entry (clobbered).
fn conv_backward(
    conv: &Conv,
    params: &[f64],
    x: &[f64],
    y: &[f64],
    gy: &mut [f64],
    gx: Option<&mut Vec<f64>>,
    grad: &mut [f64],
) {
    let (li, lo, k) = (conv.len_in, conv.len_out, conv.kernel);
    let offset = li - lo;
    for (g, v) in gy.iter_mut().zip(y) {
        if *v <= 0.0 {
            *g = 0.0;
        }
    }
    let mut gx = gx;
    if let Some(gx) = gx.as_deref_mut() {
        gx.clear();
        gx.resize(conv.inp * li, 0.0);
    }
    for c in 0..conv.out {
        let gc = &gy[c * lo..(c + 1) * lo];
        grad[conv.b + c] += gc.iter().sum::<f64>();
        for ci in 0..conv.inp {
            let xc = &x[ci * li..(ci + 1) * li];
            for kk in 0..k {
                let wi = conv.w + (c * conv.inp + ci) * k + kk;
                let s = conv.shift(kk);
                let j0 = (-s).max(0) as usize;
                if j0 >= lo {
                    continue;
                }
                let start = (j0 as isize + s) as usize;
                let mut acc = 0.0;
                for (g, xv) in gc[j0..].iter().zip(&xc[start..]) {
                    acc += g * xv;
                }
                grad[wi] += acc;
                if let Some(gx) = gx.as_deref_mut() {
                    let w = params[wi];
                    for (gxv, g) in gx[ci * li + start..].iter_mut().zip(&gc[j0..]) {
                        *gxv += w * g;
                    }
                }
            }
            match conv.skip {
                Some(sk) => {
                    let wi = sk + c * conv.inp + ci;
                    let mut acc = 0.0;
                    for (g, xv) in gc.iter().zip(&xc[offset..]) {
                        acc += g * xv;
                    }
                    grad[wi] += acc;
                    if let Some(gx) = gx.as_deref_mut() {
                        let w = params[wi];
                        for (gxv, g) in gx[ci * li + offset..].iter_mut().zip(gc) {
                            *gxv += w * g;
                        }
                    }
                }
                None if ci == c => {
                    if let Some(gx) = gx.as_deref_mut() {
                        for (gxv, g) in gx[ci * li + offset..].iter_mut().zip(gc) {
                            *gxv += g;
                        }
                    }
                }
                None => {}
            }
        }
    }
}

/// Trained (or freshly initialized) network with its normalization statistics.
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: NetConfig,
    plan: Plan,
    values: Vec<f64>,
    pub norm: NormStats,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.values == other.values && self.norm == other.norm
    }
}

impl ModelParams {
    /// Seeded uniform fan-in initialization; biases start at zero.
    pub fn init(config: NetConfig, norm: NormStats) -> Result<Self> {
        config.validate()?;
        let plan = config.plan();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut values = vec![0.0; plan.layout.total];
        let n_dense = plan.dense.len();
        for conv in &plan.convs {
            let bound = (6.0 / (conv.inp * conv.kernel) as f64).sqrt();
            for v in &mut values[conv.w..conv.w + conv.out * conv.inp * conv.kernel] {
                *v = rng.random_range(-bound..bound);
            }
            if let Some(sk) = conv.skip {
                let bound = (3.0 / conv.inp as f64).sqrt();
                for v in &mut values[sk..sk + conv.out * conv.inp] {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        for (i, d) in plan.dense.iter().enumerate() {
            let gain = if i + 1 == n_dense { 3.0 } else { 6.0 };
            let bound = (gain / d.inp as f64).sqrt();
            for v in &mut values[d.w..d.w + d.out * d.inp] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            config,
            plan,
            values,
            norm,
        })
    }

    pub fn from_values(config: NetConfig, values: Vec<f64>, norm: NormStats) -> Result<Self> {
        config.validate()?;
        let plan = config.plan();
        if values.len() != plan.layout.total {
            return Err(Error::shape(
                format!("{} parameters", plan.layout.total),
                format!("{}", values.len()),
            ));
        }
        Ok(Self {
            config,
            plan,
            values,
            norm,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.plan.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    /// Split the flat vector into named tensors.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.plan
            .layout
            .layers
            .iter()
            .map(|l| Tensor {
                name: l.name.clone(),
                shape: l.shape.clone(),
                data: self.values[l.offset..l.offset + l.len()].to_vec(),
            })
            .collect()
    }

    /// Inverse of [`ModelParams::tensors`]; names and shapes must match the layout.
    pub fn from_tensors(config: NetConfig, tensors: &[Tensor], norm: NormStats) -> Result<Self> {
        let layout = config.layout();
        if tensors.len() != layout.layers.len() {
            return Err(Error::shape(format!("{} tensors", layout.layers.len()), tensors.len()));
        }
        let mut values = vec![0.0; layout.total];
        for (l, t) in layout.layers.iter().zip(tensors) {
            if l.name != t.name || l.shape != t.shape || t.data.len() != l.len() {
                return Err(Error::shape(format!("{} {:?}", l.name, l.shape), format!("{} {:?}", t.name, t.shape)));
            }
            values[l.offset..l.offset + l.len()].copy_from_slice(&t.data);
        }
        Self::from_values(config, values, norm)
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.config.input_len() {
            return Err(Error::shape(
                format!("{FEATURES}x{} window", self.config.window),
                format!("{} values", window.len()),
            ));
        }
        Ok(())
    }

    /// Raw network output (normalized target space) for a normalized window.
    pub fn forward_normalized(&self, window: &[f64], scratch: &mut Scratch) -> Result<[f64; OUTPUTS]> {
        self.check_window(window)?;
        Ok(self.plan.forward(&self.values, window, scratch))
    }

    /// Velocity derivative in m/s² for a normalized, frame-major window.
    pub fn forward(&self, window: &[f64]) -> Result<[f64; OUTPUTS]> {
        let y = self.forward_normalized(window, &mut Scratch::default())?;
        Ok(self.norm.denormalize_target(&y))
    }

    /// Row-wise [`ModelParams::forward`] over `n` concatenated windows.
    pub fn forward_batch(&self, windows: &[f64]) -> Result<Vec<[f64; OUTPUTS]>> {
        let len = self.config.input_len();
        if windows.len() % len != 0 {
            return Err(Error::shape(format!("N x {len}"), windows.len()));
        }
        let mut scratch = Scratch::default();
        windows
            .chunks(len)
            .map(|w| {
                let y = self.plan.forward(&self.values, w, &mut scratch);
                Ok(self.norm.denormalize_target(&y))
            })
            .collect()
    }

    /// Normalize a raw window, then [`ModelParams::forward`].
    pub fn predict(&self, raw_window: &[f64]) -> Result<[f64; OUTPUTS]> {
        self.check_window(raw_window)?;
        self.forward(&self.norm.normalize_window(raw_window))
    }

    /// Forward then accumulate `∂(cotᵀ y_raw)/∂θ` into `grad`; returns `y_raw`.
    pub fn forward_backward_normalized(
        &self,
        window: &[f64],
        cotangent: impl FnOnce(&[f64; OUTPUTS]) -> [f64; OUTPUTS],
        grad: &mut [f64],
        scratch: &mut Scratch,
    ) -> Result<[f64; OUTPUTS]> {
        self.check_window(window)?;
        if grad.len() != self.values.len() {
            return Err(Error::shape(self.values.len(), grad.len()));
        }
        let y = self.plan.forward(&self.values, window, scratch);
        let cot = cotangent(&y);
        self.plan.backward(&self.values, scratch, &cot, grad);
        Ok(y)
    }

    /// Gradient of `Σ_i cot_iᵀ forward(window_i)` w.r.t. the parameters, the
    /// cotangents being taken w.r.t. the denormalized outputs.
    pub fn backward(&self, windows: &[f64], cotangents: &[[f64; OUTPUTS]]) -> Result<Vec<f64>> {
        let len = self.config.input_len();
        if windows.len() != len * cotangents.len() {
            return Err(Error::shape(
                format!("{} windows", cotangents.len()),
                format!("{} values", windows.len()),
            ));
        }
        let mut grad = vec![0.0; self.values.len()];
        let mut scratch = Scratch::default();
        let std = self.norm.target_std;
        for (w, c) in windows.chunks(len).zip(cotangents) {
            if c.iter().all(|v| *v == 0.0) {
                continue;
            }
            let scaled = [c[0] * std[0], c[1] * std[1], c[2] * std[2]];
            self.forward_backward_normalized(w, |_| scaled, &mut grad, &mut scratch)?;
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests;
