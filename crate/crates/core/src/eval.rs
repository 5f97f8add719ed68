//! Test-set metrics and oracle audits of pseudo-labels.

use serde::{Deserialize, Serialize};

use crate::clipset::{ClipSet, Oracle, Split};
use crate::error::{DistError, Result};
use crate::model::Model;
use crate::reliability::PseudoLabelRecord;
use crate::sampling::{uniform_sample, SamplingParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalMetrics {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Metrics from paired predictions and ground truth. A class with no true or
/// predicted members has F1 = 0.
pub fn metrics_from_predictions(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<EvalMetrics> {
    if predicted.len() != truth.len() {
        return Err(DistError::param("predicted", "prediction and label counts differ"));
    }
    if truth.is_empty() {
        return Err(DistError::EmptyTestSet);
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        for label in [p, t] {
            if label >= num_classes {
                return Err(DistError::LabelOutOfRange { label, num_classes });
            }
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..num_classes).map(|k| confusion[k][k]).sum();
    let f1_sum: f64 = (0..num_classes)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let actual: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let denom = (actual + predicted) as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum();
    Ok(EvalMetrics {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: f1_sum / num_classes as f64,
        confusion,
    })
}

/// Evaluate on the test split with uniform sampling. Labels come through the oracle.
pub fn evaluate(model: &Model, data: &ClipSet, sampling: &SamplingParams) -> Result<EvalMetrics> {
    if model.num_classes() != data.num_classes() {
        return Err(DistError::ClassCountMismatch {
            model: model.num_classes(),
            data: data.num_classes(),
        });
    }
    let oracle = data.oracle();
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for clip in data.in_split(Split::Test) {
        predicted.push(model.predict(&uniform_sample(clip.frames(), sampling)?)?);
        truth.push(oracle.label(clip.id())?);
    }
    metrics_from_predictions(&predicted, &truth, data.num_classes())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCounts {
    pub correct_retained: usize,
    pub incorrect_retained: usize,
    pub correct_discarded: usize,
    pub incorrect_discarded: usize,
}

impl AuditCounts {
    pub fn total(&self) -> usize {
        self.correct_retained + self.incorrect_retained + self.correct_discarded + self.incorrect_discarded
    }

    pub fn retained(&self) -> usize {
        self.correct_retained + self.incorrect_retained
    }

    /// Fraction of retained pseudo-labels that are correct.
    pub fn retained_precision(&self) -> Option<f64> {
        ratio(self.correct_retained, self.retained())
    }

    /// Fraction of all scored pseudo-labels that are correct.
    pub fn overall_precision(&self) -> Option<f64> {
        ratio(self.correct_retained + self.correct_discarded, self.total())
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Sort each record into retained/discarded by correct/incorrect.
pub fn pseudo_label_audit(records: &[PseudoLabelRecord], oracle: &Oracle<'_>) -> Result<AuditCounts> {
    let mut counts = AuditCounts::default();
    for r in records {
        let correct = oracle.label(&r.clip_id)? == r.argmax_class;
        let slot = match (r.retained, correct) {
            (true, true) => &mut counts.correct_retained,
            (true, false) => &mut counts.incorrect_retained,
            (false, true) => &mut counts.correct_discarded,
            (false, false) => &mut counts.incorrect_discarded,
        };
        *slot += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::clipset::Clip;
    use crate::frames::FrameSeq;
    use crate::reliability::Stage;

    #[test]
    fn perfect_predictor() {
        let y = [0, 1, 2, 3, 0, 1];
        let m = metrics_from_predictions(&y, &y, 4).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
        for (i, row) in m.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v > 0, i == j);
            }
        }
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let m = metrics_from_predictions(&[0; 40], &truth, 4).unwrap();
        assert_eq!(m.accuracy, 0.25);
        // class 0: precision 0.25, recall 1, F1 = 0.4; the rest 0
        assert!((m.macro_f1 - 0.1).abs() < 1e-12);
        assert_eq!(m.total(), 40);
    }

    #[test]
    fn empty_and_out_of_range_inputs() {
        assert!(matches!(metrics_from_predictions(&[], &[], 3), Err(DistError::EmptyTestSet)));
        assert!(metrics_from_predictions(&[5], &[0], 3).is_err());
        assert!(metrics_from_predictions(&[0, 1], &[0], 3).is_err());
    }

    fn record(id: &str, class: usize, retained: bool) -> PseudoLabelRecord {
        PseudoLabelRecord {
            clip_id: id.into(),
            argmax_class: class,
            reliability: None,
            invariant: retained,
            retained,
            stage: Stage::Two,
        }
    }

    #[test]
    fn audit_quadrants() {
        let f = FrameSeq::zeros(2, 4, 4);
        let clips = (0..4).map(|i| Clip::new(format!("u{i}"), f.clone(), i % 2, Split::Unlabeled)).collect();
        let set = ClipSet::new(clips, 2, None).unwrap();
        let recs = [
            record("u0", 0, true),
            record("u1", 0, true),
            record("u2", 0, false),
            record("u3", 0, false),
        ];
        let a = pseudo_label_audit(&recs, &set.oracle()).unwrap();
        assert_eq!(
            a,
            AuditCounts {
                correct_retained: 1,
                incorrect_retained: 1,
                correct_discarded: 1,
                incorrect_discarded: 1
            }
        );
        assert_eq!(a.retained_precision(), Some(0.5));
        assert_eq!(set.oracle_reads(), 4);

        let all_good: Vec<_> = (0..4).map(|i| record(&format!("u{i}"), i % 2, true)).collect();
        let a = pseudo_label_audit(&all_good, &set.oracle()).unwrap();
        assert_eq!((a.correct_retained, a.total()), (4, 4));
        assert!(pseudo_label_audit(&[record("zz", 0, true)], &set.oracle()).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_matches_confusion_trace(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200)) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let m = metrics_from_predictions(&p, &t, 5).unwrap();
            let trace: usize = (0..5).map(|k| m.confusion[k][k]).sum();
            prop_assert_eq!(m.accuracy, trace as f64 / t.len() as f64);
            prop_assert_eq!(m.total(), t.len());
            for k in 0..5 {
                prop_assert_eq!(m.confusion[k].iter().sum::<usize>(), t.iter().filter(|&&y| y == k).count());
            }
            prop_assert!((0.0..=1.0).contains(&m.macro_f1));
        }
    }
}
