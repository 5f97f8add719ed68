//! Sliding-window inference over long sequences, plus a synthetic phase sequence
//! with known phase bands to check it against.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clipset::{draw_motion, render_segment, BlobRenderer};
use crate::error::{DistError, Result};
use crate::frames::FrameSeq;
use crate::model::Model;
use crate::sampling::{uniform_sample, SamplingParams};
use crate::seed::SeedMixer;

/// Duration of one training clip in seconds. A clip of `frames_per_clip`
/// frames therefore plays at `frames_per_clip / CLIP_SECONDS` fps.
pub const CLIP_SECONDS: f64 = 3.0;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowParams {
    pub window_s: f64,
    pub overlap_s: f64,
    /// Add a final window ending exactly at the sequence end when the stride leaves a gap.
    pub flush_last: bool,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            window_s: 3.0,
            overlap_s: 1.0,
            flush_last: false,
        }
    }
}

impl WindowParams {
    pub fn stride_s(&self) -> f64 {
        self.window_s - self.overlap_s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(DistError::param("window_s", "must be positive"));
        }
        if !(self.overlap_s >= 0.0 && self.overlap_s < self.window_s) {
            return Err(DistError::param("overlap_s", "must lie in [0, window_s)"));
        }
        Ok(())
    }
}

/// Window start times for a sequence of `duration_s` seconds.
pub fn window_starts(duration_s: f64, params: &WindowParams) -> Result<Vec<f64>> {
    params.validate()?;
    if duration_s + TIME_EPS < params.window_s {
        return Err(DistError::SequenceTooShort {
            duration_s,
            window_s: params.window_s,
        });
    }
    let stride = params.stride_s();
    let mut starts = Vec::new();
    let mut k = 0usize;
    loop {
        let s = k as f64 * stride;
        if s + params.window_s > duration_s + TIME_EPS {
            break;
        }
        starts.push(s);
        k += 1;
    }
    let last_end = starts.last().map_or(0.0, |s| s + params.window_s);
    if params.flush_last && duration_s - last_end > TIME_EPS {
        starts.push(duration_s - params.window_s);
    }
    Ok(starts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimeline {
    pub windows: Vec<TimelineWindow>,
}

impl PhaseTimeline {
    pub fn classes(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.class).collect()
    }

    /// Tab-separated `start_s`, `end_s`, `class` with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("start_s\tend_s\tclass\n");
        for w in &self.windows {
            let _ = writeln!(out, "{:.3}\t{:.3}\t{}", w.start_s, w.end_s, w.class);
        }
        out
    }
}

fn frame_at(t: f64, fps: f64) -> usize {
    (t * fps).round() as usize
}

/// Classify each window of `seq` (played at `fps`) from its uniform sample.
pub fn timeline_predict(
    model: &Model,
    seq: &FrameSeq,
    fps: f64,
    window: &WindowParams,
    sampling: &SamplingParams,
) -> Result<PhaseTimeline> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(DistError::param("fps", "must be positive"));
    }
    let duration = seq.len() as f64 / fps;
    let starts = window_starts(duration, window)?;
    let windows = starts
        .into_iter()
        .map(|start_s| {
            let end_s = start_s + window.window_s;
            let a = frame_at(start_s, fps);
            let b = frame_at(end_s, fps).clamp(a + 1, seq.len());
            let view = uniform_sample(&seq.slice_frames(a, b), sampling)?;
            Ok(TimelineWindow {
                start_s,
                end_s,
                class: model.predict(&view)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseTimeline { windows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub class: usize,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSequenceParams {
    pub num_classes: usize,
    /// `(class, duration in seconds)` in playback order.
    pub phases: Vec<(usize, f64)>,
    pub frames_per_clip: usize,
    pub frame_size: usize,
    pub difficulty: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PhaseSequence {
    pub frames: FrameSeq,
    pub fps: f64,
    pub phases: Vec<PhaseSpan>,
}

impl PhaseSequence {
    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    pub fn phase_at(&self, t: f64) -> Option<usize> {
        self.phases
            .iter()
            .find(|p| t >= p.start_s && t < p.end_s)
            .or_else(|| self.phases.last().filter(|p| (t - p.end_s).abs() < TIME_EPS))
            .map(|p| p.class)
    }

    /// Ground-truth band for each window: the phase at the window centre.
    pub fn oracle_timeline(&self, window: &WindowParams) -> Result<PhaseTimeline> {
        let windows = window_starts(self.duration_s(), window)?
            .into_iter()
            .map(|start_s| {
                let end_s = start_s + window.window_s;
                let class = self
                    .phase_at((start_s + end_s) / 2.0)
                    .ok_or_else(|| DistError::param("phases", "window centre outside every phase"))?;
                Ok(TimelineWindow { start_s, end_s, class })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhaseTimeline { windows })
    }
}

/// Every class once, in order, for `seconds` each.
pub fn cycle_phases(num_classes: usize, seconds: f64) -> Vec<(usize, f64)> {
    (0..num_classes).map(|c| (c, seconds)).collect()
}

/// Parse `class:seconds` pairs separated by commas, e.g. `0:5,2:3.5`.
pub fn parse_phases(text: &str) -> Result<Vec<(usize, f64)>> {
    text.split(',')
        .map(|part| {
            let bad = || DistError::param("phases", format!("expected `class:seconds`, got `{part}`"));
            let (c, d) = part.trim().split_once(':').ok_or_else(bad)?;
            Ok((c.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

/// One continuous blob whose drift direction switches at every phase boundary.
pub fn generate_phase_sequence(params: &PhaseSequenceParams) -> Result<PhaseSequence> {
    if params.phases.is_empty() {
        return Err(DistError::param("phases", "need at least one phase"));
    }
    if params.frames_per_clip == 0 || params.frame_size == 0 {
        return Err(DistError::param("frames_per_clip", "frame counts and sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&params.difficulty) {
        return Err(DistError::param("difficulty", "must lie in [0, 1]"));
    }
    for &(class, d) in &params.phases {
        if class >= params.num_classes {
            return Err(DistError::LabelOutOfRange {
                label: class,
                num_classes: params.num_classes,
            });
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(DistError::param("phases", "durations must be positive"));
        }
    }

    let fps = params.frames_per_clip as f64 / CLIP_SECONDS;
    let n = params.frame_size;
    let mut rng = SeedMixer::new(params.seed).str("phase-sequence").rng();
    let renderer = BlobRenderer::new(&mut rng, n, params.difficulty);

    let mut spans = Vec::with_capacity(params.phases.len());
    let mut t = 0.0;
    for &(class, d) in &params.phases {
        spans.push(PhaseSpan {
            class,
            start_s: t,
            end_s: t + d,
        });
        t += d;
    }
    let total = frame_at(t, fps);
    let mut frames = FrameSeq::zeros(total, n, n);
    let mut pos = (n as f64 / 2.0, n as f64 / 2.0);
    for span in &spans {
        let (a, b) = (frame_at(span.start_s, fps), frame_at(span.end_s, fps));
        let motion = draw_motion(&mut rng, span.class, params.num_classes, n, params.difficulty);
        let out = &mut frames.as_mut_slice()[a * n * n..b * n * n];
        pos = render_segment(&renderer, &mut rng, pos, motion, out);
    }
    Ok(PhaseSequence {
        frames,
        fps,
        phases: spans,
    })
}

const PALETTE: [[u8; 3]; 8] = [
    [230, 159, 0],
    [86, 180, 233],
    [0, 158, 115],
    [240, 228, 66],
    [0, 114, 178],
    [213, 94, 0],
    [204, 121, 167],
    [120, 120, 120],
];
const UNCOVERED: [u8; 3] = [255, 255, 255];
const SEPARATOR: [u8; 3] = [40, 40, 40];

pub fn class_color(class: usize) -> [u8; 3] {
    PALETTE[class % PALETTE.len()]
}

/// Row-major RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbBuffer {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

/// Stack one colour band per timeline. A time point takes the class of the
/// latest window covering it; uncovered time stays white.
pub fn render_bands(timelines: &[&PhaseTimeline], duration_s: f64, px_per_s: u32, band_height: u32) -> RgbBuffer {
    let width = ((duration_s * f64::from(px_per_s)).ceil() as u32).max(1);
    let gap = 2;
    let rows = timelines.len() as u32;
    let height = (rows * band_height + rows.saturating_sub(1) * gap).max(1);
    let mut pixels = vec![255u8; (width * height * 3) as usize];
    for (r, tl) in timelines.iter().enumerate() {
        let top = r as u32 * (band_height + gap);
        let colors: Vec<[u8; 3]> = (0..width)
            .map(|x| {
                let t = (f64::from(x) + 0.5) / f64::from(px_per_s);
                tl.windows
                    .iter()
                    .rev()
                    .find(|w| t >= w.start_s && t < w.end_s)
                    .map_or(UNCOVERED, |w| class_color(w.class))
            })
            .collect();
        for y in top..top + band_height {
            for (x, c) in colors.iter().enumerate() {
                let i = ((y * width + x as u32) * 3) as usize;
                pixels[i..i + 3].copy_from_slice(c);
            }
        }
        if r + 1 < timelines.len() {
            for y in top + band_height..top + band_height + gap {
                for x in 0..width {
                    let i = ((y * width + x) * 3) as usize;
                    pixels[i..i + 3].copy_from_slice(&SEPARATOR);
                }
            }
        }
    }
    RgbBuffer { width, height, pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    #[test]
    fn nine_seconds_gives_four_windows() {
        let w = WindowParams::default();
        assert_eq!(w.stride_s(), 2.0);
        assert_eq!(window_starts(9.0, &w).unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(window_starts(3.0, &w).unwrap(), vec![0.0]);
    }

    #[test]
    fn unaligned_tail_and_flush() {
        let w = WindowParams::default();
        assert_eq!(window_starts(10.0, &w).unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        let f = WindowParams { flush_last: true, ..w };
        assert_eq!(window_starts(10.0, &f).unwrap(), vec![0.0, 2.0, 4.0, 6.0, 7.0]);
        assert_eq!(window_starts(9.0, &f).unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert!(matches!(window_starts(2.5, &w), Err(DistError::SequenceTooShort { .. })));
        assert!(window_starts(9.0, &WindowParams { overlap_s: 3.0, ..w }).is_err());
    }

    fn sequence() -> PhaseSequence {
        generate_phase_sequence(&PhaseSequenceParams {
            num_classes: 4,
            phases: vec![(0, 3.0), (2, 2.0), (1, 4.0)],
            frames_per_clip: 12,
            frame_size: 16,
            difficulty: 0.0,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn phase_sequence_layout() {
        let s = sequence();
        assert_eq!(s.fps, 4.0);
        assert_eq!(s.frames.len(), 36);
        assert_eq!(s.duration_s(), 9.0);
        assert_eq!(s.phase_at(0.0), Some(0));
        assert_eq!(s.phase_at(3.5), Some(2));
        assert_eq!(s.phase_at(9.0), Some(1));
        let oracle = s.oracle_timeline(&WindowParams::default()).unwrap();
        assert_eq!(oracle.classes(), vec![0, 2, 1, 1]);
    }

    #[test]
    fn windows_stay_in_bounds() {
        let s = sequence();
        let spec = ModelSpec::reference(4, (4, 16, 16), 1);
        let model = Model::init(&spec).unwrap();
        let w = WindowParams { flush_last: true, ..Default::default() };
        let tl = timeline_predict(&model, &s.frames, s.fps, &w, &SamplingParams::new(4).unwrap()).unwrap();
        assert_eq!(tl.windows.len(), 4);
        for win in &tl.windows {
            assert!(win.start_s >= 0.0 && win.end_s <= s.duration_s() + 1e-9);
            assert_eq!(win.end_s - win.start_s, 3.0);
        }
        assert!(tl.to_tsv().starts_with("start_s\tend_s\tclass\n0.000\t3.000\t0\n"));
    }

    #[test]
    fn phase_lists() {
        assert_eq!(cycle_phases(3, 5.0), vec![(0, 5.0), (1, 5.0), (2, 5.0)]);
        assert_eq!(parse_phases("0:5, 2:3.5").unwrap(), vec![(0, 5.0), (2, 3.5)]);
        assert!(parse_phases("0-5").is_err());
        assert!(parse_phases("x:1").is_err());
    }

    #[test]
    fn band_raster() {
        let tl = PhaseTimeline {
            windows: vec![
                TimelineWindow { start_s: 0.0, end_s: 3.0, class: 0 },
                TimelineWindow { start_s: 2.0, end_s: 5.0, class: 1 },
            ],
        };
        let img = render_bands(&[&tl, &tl], 6.0, 2, 3);
        assert_eq!((img.width, img.height), (12, 8));
        assert_eq!(img.pixels.len(), 12 * 8 * 3);
        let px = |x: u32, y: u32| {
            let i = ((y * img.width + x) * 3) as usize;
            [img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]]
        };
        assert_eq!(px(0, 0), class_color(0));
        assert_eq!(px(4, 0), class_color(1));
        assert_eq!(px(11, 0), UNCOVERED);
        assert_eq!(px(0, 3), SEPARATOR);
    }
}
