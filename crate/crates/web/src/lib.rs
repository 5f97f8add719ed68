//! WebAssembly bindings for the browser demo. The plain functions hold the
//! logic and are tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use dist_core::augment::AugmentParams;
use dist_core::frames::FrameSeq;
use dist_core::invariance::augmented_view;
use dist_core::reliability::{self, CheckpointPredictions, PseudoLabelRecord, Stage};
use dist_core::sampling::{uniform_sample, SamplingParams};
use dist_core::timeline::{generate_phase_sequence, PhaseSequenceParams};
use wasm_bindgen::prelude::*;

const PREVIEW_FRAMES_PER_CLIP: usize = 16;
const PREVIEW_FRAME_SIZE: usize = 32;

/// Score of a two-class prediction triple whose final checkpoint favours class 0,
/// as a function of the first and second checkpoint's probability for class 0.
pub fn two_class_score(first: f64, second: f64) -> dist_core::Result<f64> {
    let preds = CheckpointPredictions {
        first: vec![first, 1.0 - first],
        second: vec![second, 1.0 - second],
        last: vec![1.0, 0.0],
    };
    reliability::reliability_score(&preds).map(|(_, r)| r)
}

/// `steps x steps` grid of scores, row-major, rows indexed by the second checkpoint.
pub fn surface(steps: usize) -> dist_core::Result<Vec<f64>> {
    let steps = steps.max(2);
    let at = |i: usize| i as f64 / (steps - 1) as f64;
    let mut out = Vec::with_capacity(steps * steps);
    for row in 0..steps {
        for col in 0..steps {
            out.push(two_class_score(at(col), at(row))?);
        }
    }
    Ok(out)
}

pub fn top_half(scores: &[f64]) -> dist_core::Result<(Option<f64>, Vec<u32>)> {
    let records: Vec<PseudoLabelRecord> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| PseudoLabelRecord {
            clip_id: i.to_string(),
            argmax_class: 0,
            reliability: Some(s),
            invariant: false,
            retained: false,
            stage: Stage::One,
        })
        .collect();
    let picked = reliability::select_top_half(&records)?
        .iter()
        .map(|r| r.clip_id.parse().expect("ids are indices"))
        .collect();
    Ok((reliability::median(scores), picked))
}

/// Two RGBA rows of `target_frames` tiles: the uniform view on top, the
/// randomized view the invariance filter compares it against below.
pub fn clip_views(
    class: usize,
    num_classes: usize,
    difficulty: f64,
    seed: u64,
    target_frames: usize,
) -> dist_core::Result<(usize, usize, Vec<u8>)> {
    let seq = generate_phase_sequence(&PhaseSequenceParams {
        num_classes,
        phases: vec![(class, 3.0)],
        frames_per_clip: PREVIEW_FRAMES_PER_CLIP,
        frame_size: PREVIEW_FRAME_SIZE,
        difficulty,
        seed,
    })?;
    let sampling = SamplingParams::new(target_frames)?;
    let uniform = uniform_sample(&seq.frames, &sampling)?;
    let augmented = augmented_view(&seq.frames, &sampling, &AugmentParams::default(), seed, "preview")?;
    Ok(tile_rows(&[&uniform, &augmented]))
}

/// Lay out each sequence as one row of frames, grey levels scaled to the
/// range of all rows together.
fn tile_rows(rows: &[&FrameSeq]) -> (usize, usize, Vec<u8>) {
    let (h, w) = (rows[0].height(), rows[0].width());
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let (width, height) = (cols * w, rows.len() * h);
    let values = rows.iter().flat_map(|r| r.as_slice().iter().copied());
    let (lo, hi) = values.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut rgba = vec![255u8; width * height * 4];
    for (ri, row) in rows.iter().enumerate() {
        for t in 0..row.len() {
            for (k, &v) in row.frame(t).iter().enumerate() {
                let (y, x) = (ri * h + k / w, t * w + k % w);
                let g = (255.0 * (v - lo) / span).round() as u8;
                let px = 4 * (y * width + x);
                rgba[px..px + 3].fill(g);
            }
        }
    }
    (width, height, rgba)
}

fn js_err(e: dist_core::DistError) -> JsError {
    JsError::new(&format!("{}: {e}", e.code()))
}

#[wasm_bindgen]
pub fn reliability_score(first: &[f64], second: &[f64], last: &[f64]) -> Result<Vec<f64>, JsError> {
    let preds = CheckpointPredictions {
        first: first.to_vec(),
        second: second.to_vec(),
        last: last.to_vec(),
    };
    let (class, score) = reliability::reliability_score(&preds).map_err(js_err)?;
    Ok(vec![class as f64, score])
}

#[wasm_bindgen]
pub fn reliability_surface(steps: usize) -> Result<Vec<f64>, JsError> {
    surface(steps).map_err(js_err)
}

#[wasm_bindgen]
pub struct Selection {
    median: Option<f64>,
    selected: Vec<u32>,
}

#[wasm_bindgen]
impl Selection {
    #[wasm_bindgen(getter)]
    pub fn median(&self) -> Option<f64> {
        self.median
    }

    /// Indices of the selected scores in input order.
    #[wasm_bindgen(getter)]
    pub fn selected(&self) -> Vec<u32> {
        self.selected.clone()
    }
}

#[wasm_bindgen]
pub fn select_top_half(scores: &[f64]) -> Result<Selection, JsError> {
    let (median, selected) = top_half(scores).map_err(js_err)?;
    Ok(Selection { median, selected })
}

#[wasm_bindgen]
pub struct ClipPreview {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl ClipPreview {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

#[wasm_bindgen]
pub fn preview_clip(
    class: usize,
    num_classes: usize,
    difficulty: f64,
    seed: u64,
    target_frames: usize,
) -> Result<ClipPreview, JsError> {
    let (width, height, rgba) = clip_views(class, num_classes, difficulty, seed, target_frames).map_err(js_err)?;
    Ok(ClipPreview { width, height, rgba })
}
