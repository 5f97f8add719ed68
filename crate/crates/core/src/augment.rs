//! Strong clip-level augmentation: rotation, brightness and contrast jitter,
//! (no-op) saturation jitter and Gaussian blur.
//!
//! One parameter set is drawn per clip and applied to every frame, so the
//! motion between frames survives augmentation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DistError, Result};
use crate::frames::FrameSeq;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentParams {
    pub max_rotation_deg: f64,
    pub brightness_jitter: f64,
    pub contrast_jitter: f64,
    /// Kept for parameter parity with RGB pipelines; grayscale frames have no saturation.
    pub saturation_jitter: f64,
    pub blur_kernel: usize,
    pub blur_sigma_range: (f64, f64),
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            max_rotation_deg: 15.0,
            brightness_jitter: 0.3,
            contrast_jitter: 0.3,
            saturation_jitter: 0.5,
            blur_kernel: 5,
            blur_sigma_range: (0.1, 2.0),
        }
    }
}

impl AugmentParams {
    /// Parameters that leave every clip unchanged.
    pub fn identity() -> Self {
        AugmentParams {
            max_rotation_deg: 0.0,
            brightness_jitter: 0.0,
            contrast_jitter: 0.0,
            saturation_jitter: 0.0,
            blur_kernel: 1,
            blur_sigma_range: (0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_rotation_deg >= 0.0 && self.max_rotation_deg.is_finite()) {
            return Err(DistError::param("max_rotation_deg", "must be finite and non-negative"));
        }
        for (name, v) in [
            ("brightness_jitter", self.brightness_jitter),
            ("contrast_jitter", self.contrast_jitter),
            ("saturation_jitter", self.saturation_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DistError::param(name, "must be finite and non-negative"));
            }
        }
        if self.blur_kernel.is_multiple_of(2) {
            return Err(DistError::param("blur_kernel", "must be odd and at least 1"));
        }
        let (lo, hi) = self.blur_sigma_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(DistError::param("blur_sigma_range", "need 0 <= low <= high"));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut impl Rng) -> AugmentDraw {
        let mut sym = |a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
        let rotation_deg = sym(self.max_rotation_deg);
        let brightness = (1.0 + sym(self.brightness_jitter)).max(0.0);
        let contrast = (1.0 + sym(self.contrast_jitter)).max(0.0);
        let saturation = (1.0 + sym(self.saturation_jitter)).max(0.0);
        let (lo, hi) = self.blur_sigma_range;
        let blur_sigma = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        AugmentDraw {
            rotation_deg,
            brightness,
            contrast,
            saturation,
            blur_kernel: self.blur_kernel,
            blur_sigma,
        }
    }
}

/// One concrete draw of augmentation parameters, shared by all frames of a clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub rotation_deg: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
}

impl AugmentDraw {
    pub fn apply(&self, seq: &FrameSeq) -> FrameSeq {
        let (t, h, w) = seq.shape();
        let mut out = seq.clone();
        if self.rotation_deg != 0.0 {
            let mut buf = vec![0.0f32; h * w];
            for f in 0..t {
                rotate(out.frame(f), h, w, self.rotation_deg.to_radians(), &mut buf);
                out.frame_mut(f).copy_from_slice(&buf);
            }
        }
        if self.brightness != 1.0 {
            let b = self.brightness as f32;
            for v in out.as_mut_slice() {
                *v = (*v * b).clamp(0.0, 1.0);
            }
        }
        if self.contrast != 1.0 {
            // blend towards the clip mean
            let data = out.as_mut_slice();
            let mean = (data.iter().map(|&v| f64::from(v)).sum::<f64>() / data.len() as f64) as f32;
            let c = self.contrast as f32;
            for v in data {
                *v = (mean + c * (*v - mean)).clamp(0.0, 1.0);
            }
        }
        // saturation: structural no-op on single-channel frames
        if self.blur_kernel > 1 && self.blur_sigma > 1e-6 {
            let kernel = gaussian_kernel(self.blur_kernel, self.blur_sigma);
            let mut buf = vec![0.0f32; h * w];
            for f in 0..t {
                blur(out.frame_mut(f), h, w, &kernel, &mut buf);
            }
        }
        for v in out.as_mut_slice() {
            *v = v.clamp(0.0, 1.0);
        }
        out
    }
}

pub fn strong_augment(seq: &FrameSeq, params: &AugmentParams, seed: u64) -> Result<FrameSeq> {
    params.validate()?;
    if seq.is_empty() {
        return Err(DistError::EmptyClip(String::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(params.draw(&mut rng).apply(seq))
}

/// Bilinear rotation about the frame centre; samples outside the frame are 0.
fn rotate(src: &[f32], h: usize, w: usize, angle: f64, out: &mut [f32]) {
    let (s, c) = angle.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            f64::from(src[y as usize * w + x as usize])
        }
    };
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            // inverse map output pixel to source coordinates
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = at(y0, x0) * (1.0 - fx) * (1.0 - fy)
                + at(y0, x0 + 1) * fx * (1.0 - fy)
                + at(y0 + 1, x0) * (1.0 - fx) * fy
                + at(y0 + 1, x0 + 1) * fx * fy;
            out[y * w + x] = v as f32;
        }
    }
}

pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f32> {
    let half = (size / 2) as f64;
    let weights: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.iter().map(|w| (w / sum) as f32).collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Separable blur with reflect padding, in place.
fn blur(frame: &mut [f32], h: usize, w: usize, kernel: &[f32], buf: &mut [f32]) {
    let half = (kernel.len() / 2) as isize;
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, wt) in kernel.iter().enumerate() {
                let xx = reflect(x as isize + k as isize - half, w);
                acc += wt * frame[y * w + xx];
            }
            buf[y * w + x] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, wt) in kernel.iter().enumerate() {
                let yy = reflect(y as isize + k as isize - half, h);
                acc += wt * buf[yy * w + x];
            }
            frame[y * w + x] = acc;
        }
    }
}
