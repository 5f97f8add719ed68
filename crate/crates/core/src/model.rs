//! Reference clip classifier.
//!
//! ```text
//! frames (T, H, W)
//!   -> per-frame average pool by `input_pool`, clip-level standardization
//!   -> per-frame 3x3 conv, `channels` maps, ReLU, 2x2 average pool
//!   -> temporal aggregator: (2, 3, 3) conv over consecutive frame maps,
//!      `hidden` maps, ReLU, spatial max, mean over time
//!   -> linear head, `num_classes` logits
//! ```
//!
//! The temporal conv sees two neighbouring frames at once, which is what lets
//! the network pick up motion direction. All parameters live in one flat
//! `Vec<f32>` so optimizers and checkpoint files treat them uniformly.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DistError, Result};
use crate::frames::FrameSeq;
use crate::io::write_atomic;

pub const REFERENCE_ARCHITECTURE: &str = "conv-temporal-v1";
const MAGIC: &[u8; 8] = b"DISTMDL1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: String,
    pub num_classes: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub input_pool: usize,
    pub channels: usize,
    pub hidden: usize,
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn reference(num_classes: usize, input: (usize, usize, usize), init_seed: u64) -> Self {
        ModelSpec {
            architecture: REFERENCE_ARCHITECTURE.to_string(),
            num_classes,
            frames: input.0,
            height: input.1,
            width: input.2,
            input_pool: 2,
            channels: 4,
            hidden: 8,
            init_seed,
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.architecture != REFERENCE_ARCHITECTURE {
            return Err(DistError::param(
                "architecture",
                format!("unknown architecture `{}`", self.architecture),
            ));
        }
        if self.num_classes == 0 {
            return Err(DistError::param("num_classes", "must be positive"));
        }
        if self.frames == 0 {
            return Err(DistError::param("frames", "must be positive"));
        }
        if self.input_pool == 0 {
            return Err(DistError::param("input_pool", "must be positive"));
        }
        for (field, v) in [("height", self.height), ("width", self.width)] {
            if v == 0 || v % (2 * self.input_pool) != 0 {
                return Err(DistError::param(
                    field,
                    format!("must be a positive multiple of {}", 2 * self.input_pool),
                ));
            }
        }
        if self.channels == 0 || self.hidden == 0 {
            return Err(DistError::param("channels", "channels and hidden must be positive"));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    conv_w: usize,
    conv_b: usize,
    tconv_w: usize,
    tconv_b: usize,
    head_w: usize,
    head_b: usize,
    total: usize,
    // activation dims
    frames: usize,
    h1: usize,
    w1: usize,
    h2: usize,
    w2: usize,
    steps: usize,
    f: usize,
    d: usize,
    c: usize,
    pool: usize,
    height: usize,
    width: usize,
}

impl Layout {
    fn new(s: &ModelSpec) -> Self {
        let (f, d, c) = (s.channels, s.hidden, s.num_classes);
        let conv_w = 0;
        let conv_b = conv_w + f * 9;
        let tconv_w = conv_b + f;
        let tconv_b = tconv_w + d * 2 * f * 9;
        let head_w = tconv_b + d;
        let head_b = head_w + c * d;
        let total = head_b + c;
        let h1 = s.height / s.input_pool;
        let w1 = s.width / s.input_pool;
        Layout {
            conv_w,
            conv_b,
            tconv_w,
            tconv_b,
            head_w,
            head_b,
            total,
            frames: s.frames,
            h1,
            w1,
            h2: h1 / 2,
            w2: w1 / 2,
            steps: s.frames.saturating_sub(1).max(1),
            f,
            d,
            c,
            pool: s.input_pool,
            height: s.height,
            width: s.width,
        }
    }

    /// Index into the temporal kernel: `[d][tap][f][ky][kx]`.
    #[inline]
    fn tk(&self, d: usize, tap: usize, f: usize) -> usize {
        self.tconv_w + ((d * 2 + tap) * self.f + f) * 9
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Default)]
pub struct Activations {
    pooled_input: Vec<f32>, // [t][h1][w1]
    conv: Vec<f32>,         // [t][f][h1][w1], post-ReLU
    maps: Vec<f32>,         // [t][f][h2][w2]
    temporal: Vec<f32>,     // [s][d][h2][w2], post-ReLU
    peaks: Vec<usize>,      // [s][d], argmax position in the plane
    features: Vec<f32>,     // [d]
    logits: Vec<f32>,       // [c]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<f32>,
}

pub type TrainedModel = Model;

impl Model {
    /// He-initialised conv layers; zero head so an untrained model predicts uniformly.
    pub fn init(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let l = spec.layout();
        let mut params = vec![0.0f32; l.total];
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let conv = Normal::new(0.0, (2.0f64 / 9.0).sqrt()).expect("finite");
        for p in &mut params[l.conv_w..l.conv_b] {
            *p = conv.sample(&mut rng) as f32;
        }
        let fan_in = (2 * l.f * 9) as f64;
        let tconv = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite");
        for p in &mut params[l.tconv_w..l.tconv_b] {
            *p = tconv.sample(&mut rng) as f32;
        }
        Ok(Model {
            spec: spec.clone(),
            params,
        })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f32>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(DistError::param(
                "params",
                format!("expected {} parameters, got {}", spec.param_count(), params.len()),
            ));
        }
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    fn check_input(&self, seq: &FrameSeq) -> Result<()> {
        if seq.shape() != self.spec.input_shape() {
            return Err(DistError::ShapeMismatch {
                expected: self.spec.input_shape(),
                actual: seq.shape(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, seq: &FrameSeq, act: &mut Activations) -> Result<()> {
        self.check_input(seq)?;
        forward(&self.spec.layout(), &self.params, seq.as_slice(), act);
        Ok(())
    }

    pub fn logits(&self, seq: &FrameSeq) -> Result<Vec<f32>> {
        let mut act = Activations::default();
        self.forward(seq, &mut act)?;
        Ok(act.logits)
    }

    /// Softmax class probabilities, computed in `f64`.
    pub fn predict_probs(&self, seq: &FrameSeq) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(seq)?))
    }

    pub fn predict(&self, seq: &FrameSeq) -> Result<usize> {
        Ok(argmax(&self.predict_probs(seq)?))
    }

    /// Cross-entropy loss for one example; adds its gradient into `grad`.
    pub fn loss_and_grad(&self, seq: &FrameSeq, label: usize, act: &mut Activations, grad: &mut [f32]) -> Result<f64> {
        if label >= self.spec.num_classes {
            return Err(DistError::LabelOutOfRange {
                label,
                num_classes: self.spec.num_classes,
            });
        }
        self.forward(seq, act)?;
        let probs = softmax(&act.logits);
        let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
        let mut dlogits: Vec<f32> = probs.iter().map(|&p| p as f32).collect();
        dlogits[label] -= 1.0;
        backward(&self.spec.layout(), &self.params, seq.as_slice(), act, &dlogits, grad);
        Ok(loss)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = serde_json::to_vec(&self.spec).expect("spec serializes");
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + spec.len() + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(&spec);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: String| DistError::Format {
            path: origin.to_path_buf(),
            reason,
        };
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a model file".into()));
        }
        let mut pos = MAGIC.len();
        let read_u32 = |pos: &mut usize| -> Result<usize> {
            let w = bytes
                .get(*pos..*pos + 4)
                .ok_or_else(|| bad("truncated".into()))?;
            *pos += 4;
            Ok(u32::from_le_bytes([w[0], w[1], w[2], w[3]]) as usize)
        };
        let spec_len = read_u32(&mut pos)?;
        let spec_bytes = bytes
            .get(pos..pos + spec_len)
            .ok_or_else(|| bad("truncated spec".into()))?;
        let spec: ModelSpec = serde_json::from_slice(spec_bytes).map_err(|e| bad(e.to_string()))?;
        pos += spec_len;
        let n = read_u32(&mut pos)?;
        let payload = &bytes[pos..];
        if payload.len() != 4 * n {
            return Err(bad("parameter payload length mismatch".into()));
        }
        let params = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Model::from_params(spec, params).map_err(|e| bad(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| DistError::io(path, e))?;
        Model::from_bytes(&bytes, path)
    }
}

pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
    let exps: Vec<f64> = logits.iter().map(|&v| (f64::from(v) - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn forward(l: &Layout, p: &[f32], input: &[f32], act: &mut Activations) {
    let (t_n, f_n, d_n) = (l.frames, l.f, l.d);
    let (h1, w1, h2, w2) = (l.h1, l.w1, l.h2, l.w2);

    // input pooling
    act.pooled_input.clear();
    act.pooled_input.resize(t_n * h1 * w1, 0.0);
    let norm = 1.0 / (l.pool * l.pool) as f32;
    for t in 0..t_n {
        let src = &input[t * l.height * l.width..(t + 1) * l.height * l.width];
        let dst = &mut act.pooled_input[t * h1 * w1..(t + 1) * h1 * w1];
        for y in 0..h1 {
            for x in 0..w1 {
                let mut acc = 0.0;
                for dy in 0..l.pool {
                    let row = (y * l.pool + dy) * l.width + x * l.pool;
                    acc += src[row..row + l.pool].iter().sum::<f32>();
                }
                dst[y * w1 + x] = acc * norm;
            }
        }
    }
    standardize(&mut act.pooled_input);

    // per-frame conv + ReLU
    act.conv.clear();
    act.conv.resize(t_n * f_n * h1 * w1, 0.0);
    for t in 0..t_n {
        let a = &act.pooled_input[t * h1 * w1..(t + 1) * h1 * w1];
        for f in 0..f_n {
            let k = &p[l.conv_w + f * 9..l.conv_w + f * 9 + 9];
            let b = p[l.conv_b + f];
            let out = &mut act.conv[(t * f_n + f) * h1 * w1..(t * f_n + f + 1) * h1 * w1];
            conv3x3(a, h1, w1, k, b, out);
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }

    // 2x2 pooling
    act.maps.clear();
    act.maps.resize(t_n * f_n * h2 * w2, 0.0);
    for tf in 0..t_n * f_n {
        let src = &act.conv[tf * h1 * w1..(tf + 1) * h1 * w1];
        let dst = &mut act.maps[tf * h2 * w2..(tf + 1) * h2 * w2];
        for y in 0..h2 {
            for x in 0..w2 {
                let i = 2 * y * w1 + 2 * x;
                dst[y * w2 + x] = 0.25 * (src[i] + src[i + 1] + src[i + w1] + src[i + w1 + 1]);
            }
        }
    }

    // temporal conv + ReLU
    let plane = h2 * w2;
    act.temporal.clear();
    act.temporal.resize(l.steps * d_n * plane, 0.0);
    for s in 0..l.steps {
        let next = (s + 1).min(t_n - 1);
        for d in 0..d_n {
            let out = &mut act.temporal[(s * d_n + d) * plane..(s * d_n + d + 1) * plane];
            out.fill(p[l.tconv_b + d]);
            for f in 0..f_n {
                let m0 = &act.maps[(s * f_n + f) * plane..(s * f_n + f + 1) * plane];
                let m1 = &act.maps[(next * f_n + f) * plane..(next * f_n + f + 1) * plane];
                conv3x3_acc(m0, h2, w2, &p[l.tk(d, 0, f)..l.tk(d, 0, f) + 9], out);
                conv3x3_acc(m1, h2, w2, &p[l.tk(d, 1, f)..l.tk(d, 1, f) + 9], out);
            }
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }

    // spatial max, mean over time
    act.features.clear();
    act.features.resize(d_n, 0.0);
    act.peaks.clear();
    let inv = 1.0 / l.steps as f32;
    for s in 0..l.steps {
        for d in 0..d_n {
            let e = &act.temporal[(s * d_n + d) * plane..(s * d_n + d + 1) * plane];
            let mut best = 0;
            for (i, &v) in e.iter().enumerate() {
                if v > e[best] {
                    best = i;
                }
            }
            act.peaks.push(best);
            act.features[d] += e[best] * inv;
        }
    }

    act.logits.clear();
    for c in 0..l.c {
        let w = &p[l.head_w + c * d_n..l.head_w + (c + 1) * d_n];
        let z: f32 = w.iter().zip(&act.features).map(|(a, b)| a * b).sum();
        act.logits.push(z + p[l.head_b + c]);
    }
}

fn backward(l: &Layout, p: &[f32], _input: &[f32], act: &Activations, dlogits: &[f32], g: &mut [f32]) {
    let (t_n, f_n, d_n) = (l.frames, l.f, l.d);
    let (h1, w1, h2, w2) = (l.h1, l.w1, l.h2, l.w2);
    let plane = h2 * w2;

    // head
    let mut dfeat = vec![0.0f32; d_n];
    for c in 0..l.c {
        let gc = dlogits[c];
        g[l.head_b + c] += gc;
        for d in 0..d_n {
            g[l.head_w + c * d_n + d] += gc * act.features[d];
            dfeat[d] += gc * p[l.head_w + c * d_n + d];
        }
    }

    // temporal conv
    let inv = 1.0 / l.steps as f32;
    let mut dmaps = vec![0.0f32; t_n * f_n * plane];
    let mut dz = vec![0.0f32; plane];
    for s in 0..l.steps {
        let next = (s + 1).min(t_n - 1);
        for d in 0..d_n {
            let peak = act.peaks[s * d_n + d];
            let gd = dfeat[d] * inv;
            if act.temporal[(s * d_n + d) * plane + peak] <= 0.0 || gd == 0.0 {
                continue;
            }
            dz.fill(0.0);
            dz[peak] = gd;
            g[l.tconv_b + d] += gd;
            for f in 0..f_n {
                for (tap, frame) in [(0usize, s), (1usize, next)] {
                    let k0 = l.tk(d, tap, f);
                    let m = &act.maps[(frame * f_n + f) * plane..(frame * f_n + f + 1) * plane];
                    conv3x3_weight_grad(m, h2, w2, &dz, &mut g[k0..k0 + 9]);
                    let dm = &mut dmaps[(frame * f_n + f) * plane..(frame * f_n + f + 1) * plane];
                    conv3x3_input_grad(&dz, h2, w2, &p[k0..k0 + 9], dm);
                }
            }
        }
    }

    // pooling + ReLU + per-frame conv
    let mut dconv = vec![0.0f32; h1 * w1];
    for t in 0..t_n {
        let a = &act.pooled_input[t * h1 * w1..(t + 1) * h1 * w1];
        for f in 0..f_n {
            let tf = t * f_n + f;
            let dm = &dmaps[tf * plane..(tf + 1) * plane];
            let c = &act.conv[tf * h1 * w1..(tf + 1) * h1 * w1];
            dconv.fill(0.0);
            let mut any = false;
            for y in 0..h1 {
                for x in 0..w1 {
                    let i = y * w1 + x;
                    if c[i] > 0.0 {
                        dconv[i] = 0.25 * dm[(y / 2) * w2 + x / 2];
                        any = true;
                    }
                }
            }
            if !any {
                continue;
            }
            g[l.conv_b + f] += dconv.iter().sum::<f32>();
            conv3x3_weight_grad(a, h1, w1, &dconv, &mut g[l.conv_w + f * 9..l.conv_w + f * 9 + 9]);
        }
    }
}

/// Shift and scale to zero mean, unit variance over the whole clip.
fn standardize(values: &mut [f32]) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = values.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / var.sqrt().max(1e-3);
    for v in values.iter_mut() {
        *v = ((f64::from(*v) - mean) * inv) as f32;
    }
}

/// `out = b + k * a` (zero-padded 3x3 cross-correlation).
fn conv3x3(a: &[f32], h: usize, w: usize, k: &[f32], b: f32, out: &mut [f32]) {
    out.fill(b);
    conv3x3_acc(a, h, w, k, out);
}

#[inline]
fn conv3x3_acc(a: &[f32], h: usize, w: usize, k: &[f32], out: &mut [f32]) {
    for ky in 0..3 {
        for kx in 0..3 {
            let wt = k[ky * 3 + kx];
            // output (y, x) reads a[y + ky - 1][x + kx - 1]
            let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
            let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
            for y in y0..y1 {
                let src = (y + ky - 1) * w;
                let dst = y * w;
                let o = &mut out[dst + x0..dst + x1];
                let s = &a[src + x0 + kx - 1..src + x1 + kx - 1];
                for (ov, sv) in o.iter_mut().zip(s) {
                    *ov += wt * sv;
                }
            }
        }
    }
}

#[inline]
fn conv3x3_weight_grad(a: &[f32], h: usize, w: usize, dout: &[f32], gk: &mut [f32]) {
    for ky in 0..3 {
        for kx in 0..3 {
            let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
            let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
            let mut acc = 0.0f32;
            for y in y0..y1 {
                let src = (y + ky - 1) * w;
                let dst = y * w;
                let o = &dout[dst + x0..dst + x1];
                let s = &a[src + x0 + kx - 1..src + x1 + kx - 1];
                acc += o.iter().zip(s).map(|(ov, sv)| ov * sv).sum::<f32>();
            }
            gk[ky * 3 + kx] += acc;
        }
    }
}

#[inline]
fn conv3x3_input_grad(dout: &[f32], h: usize, w: usize, k: &[f32], da: &mut [f32]) {
    for ky in 0..3 {
        for kx in 0..3 {
            let wt = k[ky * 3 + kx];
            let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
            let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
            for y in y0..y1 {
                let src = (y + ky - 1) * w;
                let dst = y * w;
                let o = &dout[dst + x0..dst + x1];
                let s = &mut da[src + x0 + kx - 1..src + x1 + kx - 1];
                for (sv, ov) in s.iter_mut().zip(o) {
                    *sv += wt * ov;
                }
            }
        }
    }
}
