//! Checkpoint-weighted pseudo-label reliability and median top-half selection.
//!
//! With `c = argmax(z_final)` the final prediction acts as a one-hot target and
//! each earlier checkpoint contributes a harmonic-style agreement term at `c`:
//!
//! ```text
//! R = ( z1[c] / (z1[c] + 1) + 2 * z2[c] / (z2[c] + 1) ) / 3
//! ```
//!
//! Non-target classes drop out (`0 * 0 / (z + 0)` is taken as 0), so only
//! `z1[c]` and `z2[c]` matter, the later checkpoint counts twice, and the
//! score lies in `(0, 0.5]`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clipset::{ClipSet, Split};
use crate::error::{DistError, Result};
use crate::io::write_atomic;
use crate::model::argmax;
use crate::sampling::{uniform_sample, SamplingParams};
use crate::trainer::CheckpointSet;

const NORMALIZATION_TOL: f64 = 1e-6;

/// Class probabilities from the three teacher checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointPredictions {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub last: Vec<f64>,
}

impl CheckpointPredictions {
    pub fn validate(&self) -> Result<()> {
        let n = self.last.len();
        if n == 0 {
            return Err(DistError::InvalidProbabilities("empty probability vector".into()));
        }
        for (name, z) in [("first", &self.first), ("second", &self.second), ("last", &self.last)] {
            if z.len() != n {
                return Err(DistError::InvalidProbabilities(format!(
                    "{name} checkpoint has {} classes, expected {n}",
                    z.len()
                )));
            }
            if z.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(DistError::InvalidProbabilities(format!("{name} checkpoint has a negative or non-finite entry")));
            }
            let sum: f64 = z.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(DistError::InvalidProbabilities(format!("{name} checkpoint sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// The scalar score once the target class is fixed.
pub fn reliability_from_target(first_at_target: f64, second_at_target: f64) -> f64 {
    let term = |z: f64| if z == 0.0 { 0.0 } else { z / (z + 1.0) };
    (term(first_at_target) + 2.0 * term(second_at_target)) / 3.0
}

/// Returns `(argmax of the final checkpoint, reliability)`.
pub fn reliability_score(preds: &CheckpointPredictions) -> Result<(usize, f64)> {
    preds.validate()?;
    let c = argmax(&preds.last);
    Ok((c, reliability_from_target(preds.first[c], preds.second[c])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }

    fn from_number(n: &str) -> Option<Stage> {
        match n {
            "1" => Some(Stage::One),
            "2" => Some(Stage::Two),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelRecord {
    pub clip_id: String,
    pub argmax_class: usize,
    /// Set in stage 1 only.
    pub reliability: Option<f64>,
    pub invariant: bool,
    pub retained: bool,
    pub stage: Stage,
}

/// Score every unlabeled clip with the three teacher checkpoints.
pub fn score_unlabeled_set(
    checkpoints: &CheckpointSet,
    data: &ClipSet,
    sampling: &SamplingParams,
) -> Result<Vec<PseudoLabelRecord>> {
    if checkpoints.num_classes() != data.num_classes() {
        return Err(DistError::ClassCountMismatch {
            model: checkpoints.num_classes(),
            data: data.num_classes(),
        });
    }
    let [first, second, last] = checkpoints.entries();
    data.in_split(Split::Unlabeled)
        .map(|clip| {
            let view = uniform_sample(clip.frames(), sampling)?;
            let preds = CheckpointPredictions {
                first: first.model.predict_probs(&view)?,
                second: second.model.predict_probs(&view)?,
                last: last.model.predict_probs(&view)?,
            };
            let (argmax_class, r) = reliability_score(&preds)?;
            Ok(PseudoLabelRecord {
                clip_id: clip.id().to_string(),
                argmax_class,
                reliability: Some(r),
                invariant: false,
                retained: false,
                stage: Stage::One,
            })
        })
        .collect()
}

/// Median of the scores (mean of the two middle values for even counts).
pub fn median(scores: &[f64]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    })
}

/// Keep records scoring strictly above the median of all scores, in input order.
pub fn select_top_half(records: &[PseudoLabelRecord]) -> Result<Vec<PseudoLabelRecord>> {
    let scores = records
        .iter()
        .map(|r| {
            r.reliability
                .ok_or_else(|| DistError::param("reliability", format!("record `{}` has no score", r.clip_id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let Some(mdn) = median(&scores) else {
        return Ok(Vec::new());
    };
    let kept: Vec<PseudoLabelRecord> = records
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s > mdn)
        .map(|(r, _)| r.clone())
        .collect();
    if kept.is_empty() {
        log::warn!("degenerate top-half selection: no score exceeds the median {mdn:.6} of {} records", records.len());
    }
    Ok(kept)
}

pub const MANIFEST_HEADER: &str = "clip_id\targmax_class\treliability\tinvariant\tretained\tstage";

/// Tab-separated manifest, one record per line; missing scores are written as `NA`.
pub fn manifest_string(records: &[PseudoLabelRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        let score = r.reliability.map_or_else(|| "NA".to_string(), |s| format!("{s:.6}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.clip_id,
            r.argmax_class,
            score,
            r.invariant,
            r.retained,
            r.stage.number()
        );
    }
    out
}

pub fn write_manifest(path: &Path, records: &[PseudoLabelRecord]) -> Result<()> {
    write_atomic(path, manifest_string(records).as_bytes())
}

pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<PseudoLabelRecord>> {
    let bad = |line: usize, reason: &str| DistError::Format {
        path: origin.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(bad(1, "missing or unexpected header"));
    }
    let parse_bool = |s: &str, line| match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(line, "expected true/false")),
    };
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(line, "expected 6 tab-separated fields"));
            }
            let reliability = match f[2] {
                "NA" => None,
                s => Some(s.parse::<f64>().map_err(|_| bad(line, "bad reliability"))?),
            };
            Ok(PseudoLabelRecord {
                clip_id: f[0].to_string(),
                argmax_class: f[1].parse().map_err(|_| bad(line, "bad argmax_class"))?,
                reliability,
                invariant: parse_bool(f[3], line)?,
                retained: parse_bool(f[4], line)?,
                stage: Stage::from_number(f[5]).ok_or_else(|| bad(line, "bad stage"))?,
            })
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<PseudoLabelRecord>> {
    let text = fs::read_to_string(path).map_err(|e| DistError::io(path, e))?;
    parse_manifest(&text, path)
}
