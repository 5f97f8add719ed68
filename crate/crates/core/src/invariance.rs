//! Dual invariance filtering of pseudo-labels.
//!
//! A pseudo-label survives only if the teacher predicts the same class for the
//! uniformly sampled clip and for a randomly sampled, strongly augmented view.

use std::fmt::Write as _;
use std::path::Path;

use crate::augment::{strong_augment, AugmentParams};
use crate::clipset::ClipSet;
use crate::error::{DistError, Result};
use crate::io::write_atomic;
use crate::model::Model;
use crate::reliability::PseudoLabelRecord;
use crate::sampling::{random_stratified_sample, uniform_sample, SamplingParams};
use crate::seed::clip_seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvarianceVerdict {
    pub clip_id: String,
    pub pred_uniform: usize,
    pub pred_augmented: usize,
    pub keep: bool,
}

pub fn dual_invariance_keep(pred_uniform: usize, pred_augmented: usize) -> bool {
    pred_uniform == pred_augmented
}

/// The randomized view the filter compares against: a random stratified
/// sample, then strong augmentation, both seeded per clip.
pub fn augmented_view(
    frames: &crate::frames::FrameSeq,
    sampling: &SamplingParams,
    aug: &AugmentParams,
    seed: u64,
    clip_id: &str,
) -> Result<crate::frames::FrameSeq> {
    let s = clip_seed(seed, "invariance", clip_id);
    let view = random_stratified_sample(frames, sampling, s)?;
    strong_augment(&view, aug, s.rotate_left(17))
}

/// Predictions on the uniform view and on the randomized view of one clip.
pub fn clip_verdict(
    model: &Model,
    clip_id: &str,
    frames: &crate::frames::FrameSeq,
    sampling: &SamplingParams,
    aug: &AugmentParams,
    seed: u64,
) -> Result<InvarianceVerdict> {
    let pred_uniform = model.predict(&uniform_sample(frames, sampling)?)?;
    let pred_augmented = model.predict(&augmented_view(frames, sampling, aug, seed, clip_id)?)?;
    Ok(InvarianceVerdict {
        clip_id: clip_id.to_string(),
        pred_uniform,
        pred_augmented,
        keep: dual_invariance_keep(pred_uniform, pred_augmented),
    })
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    /// Records that passed, flagged `invariant` and `retained`, labeled with the uniform prediction.
    pub kept: Vec<PseudoLabelRecord>,
    /// One verdict per input record, in input order.
    pub verdicts: Vec<InvarianceVerdict>,
}

pub fn filter_records(
    model: &Model,
    records: &[PseudoLabelRecord],
    clips: &ClipSet,
    sampling: &SamplingParams,
    aug: &AugmentParams,
    seed: u64,
) -> Result<FilterOutcome> {
    if model.num_classes() != clips.num_classes() {
        return Err(DistError::ClassCountMismatch {
            model: model.num_classes(),
            data: clips.num_classes(),
        });
    }
    let mut out = FilterOutcome {
        kept: Vec::new(),
        verdicts: Vec::with_capacity(records.len()),
    };
    for r in records {
        let clip = clips.get(&r.clip_id).ok_or_else(|| DistError::MissingClip(r.clip_id.clone()))?;
        let v = clip_verdict(model, &r.clip_id, clip.frames(), sampling, aug, seed)?;
        if v.keep {
            out.kept.push(PseudoLabelRecord {
                argmax_class: v.pred_uniform,
                invariant: true,
                retained: true,
                ..r.clone()
            });
        }
        out.verdicts.push(v);
    }
    Ok(out)
}

pub const VERDICT_HEADER: &str = "clip_id\tpred_uniform\tpred_augmented\tkeep";

pub fn verdicts_string(verdicts: &[InvarianceVerdict]) -> String {
    let mut out = String::from(VERDICT_HEADER);
    out.push('\n');
    for v in verdicts {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", v.clip_id, v.pred_uniform, v.pred_augmented, v.keep);
    }
    out
}

pub fn write_verdicts(path: &Path, verdicts: &[InvarianceVerdict]) -> Result<()> {
    write_atomic(path, verdicts_string(verdicts).as_bytes())
}

pub fn parse_verdicts(text: &str, origin: &Path) -> Result<Vec<InvarianceVerdict>> {
    let bad = |line: usize, reason: &str| DistError::Format {
        path: origin.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some(VERDICT_HEADER) {
        return Err(bad(1, "missing or unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(line, "expected 4 tab-separated fields"));
            }
            let class = |s: &str| s.parse::<usize>().map_err(|_| bad(line, "bad class index"));
            let v = InvarianceVerdict {
                clip_id: f[0].to_string(),
                pred_uniform: class(f[1])?,
                pred_augmented: class(f[2])?,
                keep: f[3] == "true",
            };
            if v.keep != dual_invariance_keep(v.pred_uniform, v.pred_augmented) || !matches!(f[3], "true" | "false") {
                return Err(bad(line, "keep flag disagrees with the predictions"));
            }
            Ok(v)
        })
        .collect()
}

pub fn read_verdicts(path: &Path) -> Result<Vec<InvarianceVerdict>> {
    let text = std::fs::read_to_string(path).map_err(|e| DistError::io(path, e))?;
    parse_verdicts(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clipset::{generate_synthetic_dataset, GeneratorParams, Split};
    use crate::model::ModelSpec;
    use crate::reliability::Stage;

    fn data() -> ClipSet {
        let g = GeneratorParams {
            num_clips: 24,
            num_classes: 3,
            frames_per_clip: 8,
            frame_size: 16,
            difficulty: 0.3,
            seed: 4,
        };
        generate_synthetic_dataset(&g).unwrap()
    }

    fn records(set: &ClipSet) -> Vec<PseudoLabelRecord> {
        set.in_split(Split::Unlabeled)
            .map(|c| PseudoLabelRecord {
                clip_id: c.id().to_string(),
                argmax_class: 0,
                reliability: Some(0.3),
                invariant: false,
                retained: false,
                stage: Stage::One,
            })
            .collect()
    }

    /// A model with random non-zero head weights, so predictions vary by view.
    fn noisy_model(set: &ClipSet, seed: u64) -> Model {
        let spec = ModelSpec::reference(set.num_classes(), (4, 16, 16), seed);
        let base = Model::init(&spec).unwrap();
        let mut rng = crate::seed::rng_for(seed, "test-head");
        let params = base
            .params()
            .iter()
            .map(|&p| if p == 0.0 { rand::Rng::random_range(&mut rng, -1.0f32..1.0) } else { p })
            .collect();
        Model::from_params(spec, params).unwrap()
    }

    #[test]
    fn keep_rule() {
        assert!(dual_invariance_keep(2, 2));
        assert!(!dual_invariance_keep(2, 1));
    }

    #[test]
    fn constant_model_keeps_everything() {
        let set = data();
        let spec = ModelSpec::reference(3, (4, 16, 16), 1);
        let model = Model::init(&spec).unwrap();
        let recs = records(&set);
        let sampling = SamplingParams::new(4).unwrap();
        let out = filter_records(&model, &recs, &set, &sampling, &AugmentParams::default(), 9).unwrap();
        assert_eq!(out.kept.len(), recs.len());
        assert!(out.kept.iter().all(|r| r.invariant && r.retained && r.argmax_class == 0));
        assert!(filter_records(&model, &[], &set, &sampling, &AugmentParams::default(), 9)
            .unwrap()
            .kept
            .is_empty());
    }

    #[test]
    fn deterministic_idempotent_subset_with_uniform_labels() {
        let set = data();
        let model = noisy_model(&set, 21);
        let recs = records(&set);
        let sampling = SamplingParams::new(4).unwrap();
        let aug = AugmentParams::default();
        let a = filter_records(&model, &recs, &set, &sampling, &aug, 5).unwrap();
        let b = filter_records(&model, &recs, &set, &sampling, &aug, 5).unwrap();
        assert_eq!(a.verdicts, b.verdicts);
        assert_eq!(a.kept, b.kept);

        let again = filter_records(&model, &a.kept, &set, &sampling, &aug, 5).unwrap();
        assert_eq!(again.kept, a.kept);

        for r in &a.kept {
            assert!(recs.iter().any(|x| x.clip_id == r.clip_id));
            let clip = set.get(&r.clip_id).unwrap();
            let u = uniform_sample(clip.frames(), &sampling).unwrap();
            assert_eq!(r.argmax_class, model.predict(&u).unwrap());
        }
        for v in &a.verdicts {
            assert_eq!(v.keep, v.pred_uniform == v.pred_augmented);
        }
    }

    #[test]
    fn missing_clip_is_named() {
        let set = data();
        let model = noisy_model(&set, 2);
        let mut recs = records(&set);
        recs[0].clip_id = "ghost".into();
        let err = filter_records(&model, &recs, &set, &SamplingParams::new(4).unwrap(), &AugmentParams::default(), 1)
            .unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn verdict_table_format() {
        let v = InvarianceVerdict {
            clip_id: "a".into(),
            pred_uniform: 1,
            pred_augmented: 2,
            keep: false,
        };
        let text = verdicts_string(std::slice::from_ref(&v));
        assert_eq!(text, "clip_id\tpred_uniform\tpred_augmented\tkeep\na\t1\t2\tfalse\n");
        assert_eq!(parse_verdicts(&text, Path::new("v")).unwrap(), vec![v]);
        assert!(parse_verdicts("clip_id\tpred_uniform\tpred_augmented\tkeep\na\t1\t2\ttrue\n", Path::new("v")).is_err());
    }
}
