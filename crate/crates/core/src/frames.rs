//! Grayscale frame sequences and their on-disk raw array layout.
//!
//! Raw array files are little-endian: a `u32` rank, then `rank` `u32` dims,
//! then the `f32` values in row-major order.

use std::path::Path;

use crate::error::{DistError, Result};

/// A `(frames, height, width)` block of grayscale pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeq {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FrameSeq {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(DistError::param("shape", "all dimensions must be positive"));
        }
        if data.len() != frames * height * width {
            return Err(DistError::param(
                "data",
                format!(
                    "expected {} values for shape ({frames}, {height}, {width}), got {}",
                    frames * height * width,
                    data.len()
                ),
            ));
        }
        Ok(FrameSeq {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        FrameSeq {
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// New sequence made of the given frame indices (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> FrameSeq {
        let n = self.frame_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.frame(i));
        }
        FrameSeq {
            frames: indices.len(),
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Contiguous frame range `[start, end)`.
    pub fn slice_frames(&self, start: usize, end: usize) -> FrameSeq {
        let n = self.frame_len();
        FrameSeq {
            frames: end - start,
            height: self.height,
            width: self.width,
            data: self.data[start * n..end * n].to_vec(),
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let dims = [self.frames as u32, self.height as u32, self.width as u32];
        let mut out = Vec::with_capacity(4 * (1 + dims.len() + self.data.len()));
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_raw_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: &str| DistError::Format {
            path: origin.to_path_buf(),
            reason: reason.to_string(),
        };
        let word = |i: usize| -> Option<[u8; 4]> { bytes.get(4 * i..4 * i + 4)?.try_into().ok() };
        let rank = u32::from_le_bytes(word(0).ok_or_else(|| bad("truncated header"))?) as usize;
        if rank != 3 {
            return Err(bad(&format!("expected rank 3, found {rank}")));
        }
        let mut dims = [0usize; 3];
        for (k, d) in dims.iter_mut().enumerate() {
            *d = u32::from_le_bytes(word(1 + k).ok_or_else(|| bad("truncated header"))?) as usize;
        }
        let count = dims[0] * dims[1] * dims[2];
        let header = 4 * (1 + rank);
        if bytes.len() != header + 4 * count {
            return Err(bad("payload length does not match dims"));
        }
        let data = bytes[header..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        FrameSeq::new(dims[0], dims[1], dims[2], data).map_err(|e| bad(&e.to_string()))
    }
}
