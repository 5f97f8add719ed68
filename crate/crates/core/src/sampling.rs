//! Temporal frame sampling: the deterministic uniform sampler used for
//! pseudo-labeling and evaluation, and the stratified random sampler used for
//! training inputs and the invariance check.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DistError, Result};
use crate::frames::FrameSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingParams {
    pub target_frames: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { target_frames: 8 }
    }
}

impl SamplingParams {
    pub fn new(target_frames: usize) -> Result<Self> {
        let p = SamplingParams { target_frames };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_frames == 0 {
            return Err(DistError::param("target_frames", "must be at least 1"));
        }
        Ok(())
    }
}

/// Evenly spaced indices including both endpoints.
///
/// For `len >= target` this is `floor(i * (len - 1) / (target - 1))`. Shorter
/// clips repeat frames evenly with `floor(i * len / target)`.
pub fn uniform_indices(len: usize, target: usize) -> Vec<usize> {
    debug_assert!(len > 0 && target > 0);
    if target == 1 {
        return vec![0];
    }
    if len < target {
        return (0..target).map(|i| i * len / target).collect();
    }
    (0..target).map(|i| i * (len - 1) / (target - 1)).collect()
}

/// Bounds `[lo, hi)` of each of the `target` strata over `len` frames.
pub fn strata(len: usize, target: usize) -> Vec<(usize, usize)> {
    (0..target)
        .map(|i| {
            let lo = i * len / target;
            let hi = ((i + 1) * len / target).max(lo + 1);
            (lo, hi.min(len))
        })
        .collect()
}

pub fn stratified_indices(len: usize, target: usize, rng: &mut impl Rng) -> Vec<usize> {
    strata(len, target)
        .into_iter()
        .map(|(lo, hi)| if hi - lo == 1 { lo } else { rng.random_range(lo..hi) })
        .collect()
}

pub fn uniform_sample(clip: &FrameSeq, params: &SamplingParams) -> Result<FrameSeq> {
    params.validate()?;
    if clip.is_empty() {
        return Err(DistError::EmptyClip(String::new()));
    }
    Ok(clip.select(&uniform_indices(clip.len(), params.target_frames)))
}

pub fn random_stratified_sample(clip: &FrameSeq, params: &SamplingParams, seed: u64) -> Result<FrameSeq> {
    params.validate()?;
    if clip.is_empty() {
        return Err(DistError::EmptyClip(String::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(clip.select(&stratified_indices(clip.len(), params.target_frames, &mut rng)))
}
