//! Clip collections, the synthetic motion dataset and labeled/unlabeled/test splits.
//!
//! Each synthetic class is a temporal dynamic: a Gaussian blob drifting across a
//! toroidal frame in a class-specific direction. A single frame carries no class
//! information, only the motion between frames does. `difficulty` widens the
//! per-clip direction jitter (towards neighbouring classes) and scales per-pixel
//! noise.
//!
//! Oracle labels are stored for every clip but only labeled clips expose them
//! through [`Clip::label`]. Everything else goes through [`Oracle`], which counts
//! reads of non-labeled clips so leaks can be detected.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DistError, Result};
use crate::frames::FrameSeq;
use crate::io::write_atomic;
use crate::seed::{rng_for, SeedMixer};

pub const METADATA_FILE: &str = "metadata.json";
const METADATA_SCHEMA: u32 = 1;

const BACKGROUND: f64 = 0.15;
const BLOB_AMPLITUDE: f64 = 0.7;
/// Pixel noise standard deviation at difficulty 1.
const MAX_NOISE_STD: f64 = 0.25;
/// Direction jitter at difficulty 1, as a multiple of half the angular gap between classes.
const MAX_JITTER: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Labeled,
    Unlabeled,
    Test,
}

#[derive(Debug, Clone)]
pub struct Clip {
    id: String,
    frames: FrameSeq,
    oracle_label: usize,
    split: Split,
}

impl Clip {
    pub fn new(id: impl Into<String>, frames: FrameSeq, oracle_label: usize, split: Split) -> Self {
        Clip {
            id: id.into(),
            frames,
            oracle_label,
            split,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frames(&self) -> &FrameSeq {
        &self.frames
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Ground truth, only for clips in the labeled split.
    pub fn label(&self) -> Option<usize> {
        (self.split == Split::Labeled).then_some(self.oracle_label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub num_clips: usize,
    pub num_classes: usize,
    pub frames_per_clip: usize,
    pub frame_size: usize,
    pub difficulty: f64,
    pub seed: u64,
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(DistError::param("num_classes", "must be at least 2"));
        }
        if self.num_clips == 0 {
            return Err(DistError::param("num_clips", "must be positive"));
        }
        if self.num_clips < self.num_classes {
            return Err(DistError::param(
                "num_clips",
                format!("{} clips cannot cover {} classes", self.num_clips, self.num_classes),
            ));
        }
        if self.frames_per_clip == 0 {
            return Err(DistError::param("frames_per_clip", "must be positive"));
        }
        if self.frame_size == 0 {
            return Err(DistError::param("frame_size", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(DistError::param("difficulty", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ClipSet {
    clips: Vec<Clip>,
    num_classes: usize,
    generator: Option<GeneratorParams>,
    index: HashMap<String, usize>,
    oracle_reads: Arc<AtomicUsize>,
}

impl Clone for ClipSet {
    fn clone(&self) -> Self {
        ClipSet {
            clips: self.clips.clone(),
            num_classes: self.num_classes,
            generator: self.generator,
            index: self.index.clone(),
            oracle_reads: Arc::new(AtomicUsize::new(0)),
        }
    }
}

impl ClipSet {
    pub fn new(clips: Vec<Clip>, num_classes: usize, generator: Option<GeneratorParams>) -> Result<Self> {
        if num_classes == 0 {
            return Err(DistError::param("num_classes", "must be positive"));
        }
        let mut index = HashMap::with_capacity(clips.len());
        let mut shape = None;
        for (i, clip) in clips.iter().enumerate() {
            if clip.frames.is_empty() {
                return Err(DistError::EmptyClip(clip.id.clone()));
            }
            let (_, h, w) = clip.frames.shape();
            match shape {
                None => shape = Some((h, w)),
                Some(s) if s != (h, w) => {
                    return Err(DistError::param("frames", format!("clip `{}` has frame size {h}x{w}, expected {}x{}", clip.id, s.0, s.1)));
                }
                _ => {}
            }
            if !clip.frames.in_unit_range() {
                return Err(DistError::param("frames", format!("clip `{}` has pixels outside [0, 1]", clip.id)));
            }
            if clip.oracle_label >= num_classes {
                return Err(DistError::LabelOutOfRange {
                    label: clip.oracle_label,
                    num_classes,
                });
            }
            if index.insert(clip.id.clone(), i).is_some() {
                return Err(DistError::param("id", format!("duplicate clip id `{}`", clip.id)));
            }
        }
        Ok(ClipSet {
            clips,
            num_classes,
            generator,
            index,
            oracle_reads: Arc::new(AtomicUsize::new(0)),
        })
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn generator(&self) -> Option<&GeneratorParams> {
        self.generator.as_ref()
    }

    pub fn get(&self, id: &str) -> Option<&Clip> {
        self.index.get(id).map(|&i| &self.clips[i])
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Clip> {
        self.clips.iter().filter(move |c| c.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.in_split(split).count()
    }

    /// `(frames, label)` pairs for the labeled split.
    pub fn labeled_examples(&self) -> Vec<(&FrameSeq, usize)> {
        self.in_split(Split::Labeled)
            .map(|c| (&c.frames, c.oracle_label))
            .collect()
    }

    /// Audit-only access to every oracle label.
    pub fn oracle(&self) -> Oracle<'_> {
        Oracle { set: self }
    }

    /// Number of oracle reads of unlabeled or test clips made through [`Oracle`].
    pub fn oracle_reads(&self) -> usize {
        self.oracle_reads.load(Ordering::Relaxed)
    }

    pub fn summary(&self) -> ClipSetSummary {
        let mut s = ClipSetSummary {
            total: self.clips.len(),
            labeled: 0,
            unlabeled: 0,
            test: 0,
            per_class: vec![0; self.num_classes],
            labeled_per_class: vec![0; self.num_classes],
        };
        for c in &self.clips {
            match c.split {
                Split::Labeled => {
                    s.labeled += 1;
                    s.labeled_per_class[c.oracle_label] += 1;
                }
                Split::Unlabeled => s.unlabeled += 1,
                Split::Test => s.test += 1,
            }
            s.per_class[c.oracle_label] += 1;
        }
        s
    }

    /// Write `metadata.json` plus one raw frame file per clip under `clips/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let clip_dir = dir.join("clips");
        fs::create_dir_all(&clip_dir).map_err(|e| DistError::io(&clip_dir, e))?;
        let mut entries = Vec::with_capacity(self.clips.len());
        for c in &self.clips {
            let file = format!("clips/{}.bin", c.id);
            write_atomic(&dir.join(&file), &c.frames.to_raw_bytes())?;
            entries.push(ClipEntry {
                id: c.id.clone(),
                label: c.oracle_label,
                split: c.split,
                file: Some(file),
            });
        }
        self.write_metadata(dir, entries)
    }

    /// Write only `metadata.json`; frames are regenerated from the generator
    /// parameters on load. Fails for sets without generator parameters.
    pub fn save_index(&self, dir: &Path) -> Result<()> {
        if self.generator.is_none() {
            return Err(DistError::param("generator", "an index-only save needs generator parameters"));
        }
        fs::create_dir_all(dir).map_err(|e| DistError::io(dir, e))?;
        let entries = self
            .clips
            .iter()
            .map(|c| ClipEntry {
                id: c.id.clone(),
                label: c.oracle_label,
                split: c.split,
                file: None,
            })
            .collect();
        self.write_metadata(dir, entries)
    }

    fn write_metadata(&self, dir: &Path, entries: Vec<ClipEntry>) -> Result<()> {
        let meta = Metadata {
            schema_version: METADATA_SCHEMA,
            num_classes: self.num_classes,
            generator: self.generator,
            clips: entries,
        };
        let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        write_atomic(&dir.join(METADATA_FILE), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(METADATA_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| DistError::io(&meta_path, e))?;
        let meta: Metadata = serde_json::from_str(&text).map_err(|e| DistError::Format {
            path: meta_path.clone(),
            reason: e.to_string(),
        })?;
        if meta.schema_version != METADATA_SCHEMA {
            return Err(DistError::Format {
                path: meta_path,
                reason: format!("unsupported schema version {}", meta.schema_version),
            });
        }
        let mut regenerated: Option<ClipSet> = None;
        let mut clips = Vec::with_capacity(meta.clips.len());
        for e in meta.clips {
            let frames = match &e.file {
                Some(file) => {
                    let path = dir.join(file);
                    let bytes = fs::read(&path).map_err(|err| DistError::io(&path, err))?;
                    FrameSeq::from_raw_bytes(&bytes, &path)?
                }
                None => {
                    let generator = meta.generator.as_ref().ok_or_else(|| DistError::Format {
                        path: meta_path.clone(),
                        reason: format!("clip `{}` has no frame file and no generator is recorded", e.id),
                    })?;
                    if regenerated.is_none() {
                        regenerated = Some(generate_synthetic_dataset(generator)?);
                    }
                    let source = regenerated.as_ref().and_then(|g| g.get(&e.id));
                    match source {
                        Some(c) if c.oracle_label == e.label => c.frames.clone(),
                        _ => {
                            return Err(DistError::Format {
                                path: meta_path.clone(),
                                reason: format!("clip `{}` does not match its regenerated counterpart", e.id),
                            })
                        }
                    }
                }
            };
            clips.push(Clip::new(e.id, frames, e.label, e.split));
        }
        ClipSet::new(clips, meta.num_classes, meta.generator)
    }

    fn with_splits(&self, splits: &[Split]) -> Result<ClipSet> {
        let clips = self
            .clips
            .iter()
            .zip(splits)
            .map(|(c, &s)| Clip {
                split: s,
                ..c.clone()
            })
            .collect();
        ClipSet::new(clips, self.num_classes, self.generator)
    }
}

/// Audit pathway to oracle labels.
pub struct Oracle<'a> {
    set: &'a ClipSet,
}

impl Oracle<'_> {
    pub fn label(&self, id: &str) -> Result<usize> {
        let clip = self.set.get(id).ok_or_else(|| DistError::MissingClip(id.to_string()))?;
        if clip.split != Split::Labeled {
            self.set.oracle_reads.fetch_add(1, Ordering::Relaxed);
        }
        Ok(clip.oracle_label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClipSetSummary {
    pub total: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    pub per_class: Vec<usize>,
    pub labeled_per_class: Vec<usize>,
}

impl std::fmt::Display for ClipSetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "clips: {} (labeled {}, unlabeled {}, test {})",
            self.total, self.labeled, self.unlabeled, self.test
        )?;
        for (k, (all, lab)) in self.per_class.iter().zip(&self.labeled_per_class).enumerate() {
            writeln!(f, "  class {k}: {all} clips, {lab} labeled")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    schema_version: u32,
    num_classes: usize,
    generator: Option<GeneratorParams>,
    clips: Vec<ClipEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipEntry {
    id: String,
    label: usize,
    split: Split,
    /// Absent when frames are regenerated from the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<String>,
}

/// Motion of one blob segment, in pixels per frame.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Motion {
    pub angle: f64,
    pub speed: f64,
}

pub(crate) fn class_angle(class: usize, num_classes: usize) -> f64 {
    2.0 * PI * class as f64 / num_classes as f64
}

/// Draw a per-segment motion for `class`.
pub(crate) fn draw_motion(
    rng: &mut ChaCha8Rng,
    class: usize,
    num_classes: usize,
    frame_size: usize,
    difficulty: f64,
) -> Motion {
    let half_gap = PI / num_classes as f64;
    let jitter = rng.random_range(-1.0..=1.0) * difficulty * MAX_JITTER * half_gap;
    let scale = frame_size as f64 / 32.0;
    Motion {
        angle: class_angle(class, num_classes) + jitter,
        speed: rng.random_range(1.0..2.0) * scale,
    }
}

pub(crate) struct BlobRenderer {
    size: usize,
    sigma: f64,
    noise: Option<Normal<f64>>,
}

impl BlobRenderer {
    pub fn new(rng: &mut ChaCha8Rng, size: usize, difficulty: f64) -> Self {
        let scale = size as f64 / 32.0;
        let sigma = rng.random_range(1.5..2.5) * scale;
        let std = difficulty * MAX_NOISE_STD;
        BlobRenderer {
            size,
            sigma,
            noise: (std > 0.0).then(|| Normal::new(0.0, std).expect("finite std")),
        }
    }

    /// Render a blob centred at `(cx, cy)` on the torus into `out`.
    pub fn render(&self, rng: &mut ChaCha8Rng, cx: f64, cy: f64, out: &mut [f32]) {
        let n = self.size as f64;
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        for y in 0..self.size {
            let mut dy = (y as f64 - cy).rem_euclid(n);
            if dy > n / 2.0 {
                dy -= n;
            }
            for x in 0..self.size {
                let mut dx = (x as f64 - cx).rem_euclid(n);
                if dx > n / 2.0 {
                    dx -= n;
                }
                let mut v = BACKGROUND + BLOB_AMPLITUDE * (-(dx * dx + dy * dy) * inv).exp();
                if let Some(noise) = &self.noise {
                    v += noise.sample(rng);
                }
                out[y * self.size + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
}

/// Render `frames` frames of a blob starting at `(x, y)`; returns the final position.
pub(crate) fn render_segment(
    renderer: &BlobRenderer,
    rng: &mut ChaCha8Rng,
    start: (f64, f64),
    motion: Motion,
    out: &mut [f32],
) -> (f64, f64) {
    let n = renderer.size;
    let (vx, vy) = (motion.speed * motion.angle.cos(), motion.speed * motion.angle.sin());
    let (mut x, mut y) = start;
    for frame in out.chunks_exact_mut(n * n) {
        renderer.render(rng, x, y, frame);
        x = (x + vx).rem_euclid(n as f64);
        y = (y + vy).rem_euclid(n as f64);
    }
    (x, y)
}

pub fn generate_synthetic_dataset(params: &GeneratorParams) -> Result<ClipSet> {
    params.validate()?;
    let GeneratorParams {
        num_clips,
        num_classes,
        frames_per_clip,
        frame_size,
        difficulty,
        seed,
    } = *params;

    let mut labels: Vec<usize> = (0..num_clips).map(|i| i % num_classes).collect();
    labels.shuffle(&mut rng_for(seed, "labels"));

    let width = num_clips.to_string().len().max(5);
    let clips = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let id = format!("clip_{i:0width$}");
            let mut rng = SeedMixer::new(seed).str("clip").str(&id).rng();
            let motion = draw_motion(&mut rng, label, num_classes, frame_size, difficulty);
            let renderer = BlobRenderer::new(&mut rng, frame_size, difficulty);
            let start = (
                rng.random_range(0.0..frame_size as f64),
                rng.random_range(0.0..frame_size as f64),
            );
            let mut frames = FrameSeq::zeros(frames_per_clip, frame_size, frame_size);
            render_segment(&renderer, &mut rng, start, motion, frames.as_mut_slice());
            Clip::new(id, frames, label, Split::Unlabeled)
        })
        .collect();
    ClipSet::new(clips, num_classes, Some(*params))
}

/// Assign labeled/unlabeled/test splits.
///
/// `test = round(test_fraction * N)` and `labeled = round(labeled_fraction * (N - test))`.
/// The labeled subset always contains at least one clip of every class.
pub fn split_labeled_unlabeled(
    set: &ClipSet,
    labeled_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<ClipSet> {
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(DistError::param("labeled_fraction", "must lie in (0, 1]"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DistError::param("test_fraction", "must lie in (0, 1)"));
    }
    let n = set.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    let n_labeled = (labeled_fraction * (n - n_test) as f64).round() as usize;
    let coverage = DistError::ClassCoverage {
        labeled: n_labeled,
        num_classes: set.num_classes,
    };
    if n_labeled < set.num_classes {
        return Err(coverage);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "split"));
    let mut splits = vec![Split::Unlabeled; n];
    for &i in &order[..n_test] {
        splits[i] = Split::Test;
    }
    let rest = &order[n_test..];

    // one clip per class first, then fill in shuffled order
    let mut seen = vec![false; set.num_classes];
    let mut taken = 0;
    for &i in rest {
        let label = set.clips[i].oracle_label;
        if !seen[label] {
            seen[label] = true;
            splits[i] = Split::Labeled;
            taken += 1;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(coverage);
    }
    for &i in rest {
        if taken == n_labeled {
            break;
        }
        if splits[i] != Split::Labeled {
            splits[i] = Split::Labeled;
            taken += 1;
        }
    }
    let out = set.with_splits(&splits)?;
    let (nl, nu) = (out.count(Split::Labeled), out.count(Split::Unlabeled));
    if nu <= nl {
        log::warn!("split has {nu} unlabeled clips for {nl} labeled; the semi-supervised regime expects more unlabeled data");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(num_clips: usize, num_classes: usize, difficulty: f64, seed: u64) -> GeneratorParams {
        GeneratorParams {
            num_clips,
            num_classes,
            frames_per_clip: 8,
            frame_size: 16,
            difficulty,
            seed,
        }
    }

    fn class_counts(set: &ClipSet) -> Vec<usize> {
        set.summary().per_class
    }

    #[test]
    fn one_clip_per_class_without_noise() {
        let set = generate_synthetic_dataset(&params(4, 4, 0.0, 7)).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(class_counts(&set), vec![1, 1, 1, 1]);
        // zero noise: every pixel is background plus a smooth blob
        for c in set.clips() {
            let f = c.frames().as_slice();
            assert!(f.iter().all(|&v| v >= BACKGROUND as f32 - 1e-6));
        }
    }

    #[test]
    fn labels_are_balanced_within_one() {
        let set = generate_synthetic_dataset(&params(9, 4, 0.2, 3)).unwrap();
        let mut counts = class_counts(&set);
        counts.sort_unstable();
        assert_eq!(counts, vec![2, 2, 2, 3]);
    }

    #[test]
    fn generation_is_bit_identical_for_equal_seeds() {
        let a = generate_synthetic_dataset(&params(12, 3, 0.5, 11)).unwrap();
        let b = generate_synthetic_dataset(&params(12, 3, 0.5, 11)).unwrap();
        let c = generate_synthetic_dataset(&params(12, 3, 0.5, 12)).unwrap();
        for (x, y) in a.clips().iter().zip(b.clips()) {
            assert_eq!(x.id(), y.id());
            assert_eq!(x.frames().to_raw_bytes(), y.frames().to_raw_bytes());
            assert_eq!(x.oracle_label, y.oracle_label);
        }
        assert!(a.clips().iter().zip(c.clips()).any(|(x, y)| x.frames() != y.frames()));
    }

    #[test]
    fn invalid_parameters_name_the_field() {
        let err = generate_synthetic_dataset(&params(3, 4, 0.0, 1)).unwrap_err();
        assert!(err.to_string().contains("num_clips"), "{err}");
        let err = generate_synthetic_dataset(&params(8, 1, 0.0, 1)).unwrap_err();
        assert!(err.to_string().contains("num_classes"), "{err}");
        let err = generate_synthetic_dataset(&params(8, 2, 1.5, 1)).unwrap_err();
        assert!(err.to_string().contains("difficulty"), "{err}");
        let mut p = params(8, 2, 0.0, 1);
        p.frames_per_clip = 0;
        assert!(generate_synthetic_dataset(&p).unwrap_err().to_string().contains("frames_per_clip"));
    }

    #[test]
    fn split_arithmetic_32_clips() {
        let set = generate_synthetic_dataset(&params(32, 4, 0.1, 5)).unwrap();
        let split = split_labeled_unlabeled(&set, 0.5, 0.25, 9).unwrap();
        let s = split.summary();
        assert_eq!((s.labeled, s.unlabeled, s.test), (12, 12, 8));
        assert_eq!(s.labeled + s.unlabeled + s.test, s.total);
        assert!(s.labeled_per_class.iter().all(|&c| c >= 1));

        let again = split_labeled_unlabeled(&set, 0.5, 0.25, 9).unwrap();
        let a: Vec<_> = split.clips().iter().map(|c| c.split()).collect();
        let b: Vec<_> = again.clips().iter().map(|c| c.split()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_insufficient_class_coverage() {
        let set = generate_synthetic_dataset(&params(20, 4, 0.1, 5)).unwrap();
        // round(0.1 * 18) = 2 labeled clips for 4 classes
        let err = split_labeled_unlabeled(&set, 0.1, 0.1, 1).unwrap_err();
        assert!(matches!(err, DistError::ClassCoverage { .. }));
        assert!(err.to_string().contains("class coverage"));
        assert!(split_labeled_unlabeled(&set, 1.5, 0.5, 1).is_err());
        assert!(split_labeled_unlabeled(&set, 0.0, 0.5, 1).is_err());
        assert!(split_labeled_unlabeled(&set, 0.5, 1.0, 1).is_err());
    }

    #[test]
    fn full_labeled_fraction_leaves_no_unlabeled_clips() {
        let set = generate_synthetic_dataset(&params(20, 4, 0.1, 5)).unwrap();
        let split = split_labeled_unlabeled(&set, 1.0, 0.2, 1).unwrap();
        assert_eq!((split.count(Split::Labeled), split.count(Split::Unlabeled), split.count(Split::Test)), (16, 0, 4));
    }

    #[test]
    fn empty_summary_is_all_zero() {
        let set = ClipSet::new(Vec::new(), 3, None).unwrap();
        let s = set.summary();
        assert_eq!((s.total, s.labeled, s.unlabeled, s.test), (0, 0, 0, 0));
        assert_eq!(s.per_class, vec![0, 0, 0]);
    }

    #[test]
    fn labels_are_quarantined_outside_the_labeled_split() {
        let set = generate_synthetic_dataset(&params(16, 2, 0.0, 2)).unwrap();
        let split = split_labeled_unlabeled(&set, 0.5, 0.25, 2).unwrap();
        for c in split.clips() {
            assert_eq!(c.label().is_some(), c.split() == Split::Labeled);
        }
        assert_eq!(split.oracle_reads(), 0);
        let labeled = split.in_split(Split::Labeled).next().unwrap().id().to_string();
        let test = split.in_split(Split::Test).next().unwrap().id().to_string();
        split.oracle().label(&labeled).unwrap();
        assert_eq!(split.oracle_reads(), 0);
        split.oracle().label(&test).unwrap();
        assert_eq!(split.oracle_reads(), 1);
        assert!(split.oracle().label("nope").is_err());
    }

    #[test]
    fn constructor_rejects_duplicates_and_bad_pixels() {
        let f = FrameSeq::zeros(2, 2, 2);
        let dup = vec![
            Clip::new("a", f.clone(), 0, Split::Labeled),
            Clip::new("a", f.clone(), 1, Split::Labeled),
        ];
        assert!(ClipSet::new(dup, 2, None).is_err());
        let bad = FrameSeq::new(1, 1, 1, vec![1.5]).unwrap();
        assert!(ClipSet::new(vec![Clip::new("b", bad, 0, Split::Test)], 2, None).is_err());
        assert!(ClipSet::new(vec![Clip::new("c", f, 2, Split::Test)], 2, None).is_err());
    }

    #[test]
    fn persistence_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let set = generate_synthetic_dataset(&params(12, 3, 0.4, 4)).unwrap();
        let split = split_labeled_unlabeled(&set, 0.5, 0.34, 4).unwrap();
        split.save(dir.path()).unwrap();
        let back = ClipSet::load(dir.path()).unwrap();
        assert_eq!(back.num_classes(), 3);
        assert_eq!(back.generator(), split.generator());
        for (a, b) in split.clips().iter().zip(back.clips()) {
            assert_eq!(a.id(), b.id());
            assert_eq!(a.split(), b.split());
            assert_eq!(a.frames(), b.frames());
            assert_eq!(a.oracle_label, b.oracle_label);
        }
    }

    #[test]
    fn index_only_persistence_regenerates_frames() {
        let dir = tempfile::tempdir().unwrap();
        let set = generate_synthetic_dataset(&params(12, 3, 0.4, 4)).unwrap();
        let split = split_labeled_unlabeled(&set, 0.5, 0.34, 4).unwrap();
        split.save_index(dir.path()).unwrap();
        assert!(!dir.path().join("clips").exists());
        let back = ClipSet::load(dir.path()).unwrap();
        for (a, b) in split.clips().iter().zip(back.clips()) {
            assert_eq!((a.id(), a.split(), a.frames()), (b.id(), b.split(), b.frames()));
        }
        let bare = ClipSet::new(vec![Clip::new("x", FrameSeq::zeros(1, 2, 2), 0, Split::Test)], 1, None).unwrap();
        assert!(bare.save_index(dir.path()).is_err());
    }
}
