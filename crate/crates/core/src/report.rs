//! The structured run report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DistError, Result};
use crate::eval::{AuditCounts, EvalMetrics};
use crate::io::write_atomic;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    /// Pseudo-labels produced by the teacher.
    pub scored: usize,
    /// Pseudo-labels handed to the invariance check.
    pub filter_input: usize,
    pub retained: usize,
    /// Labeled plus retained examples the student trained on.
    pub mixed_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageAudit {
    pub counts: AuditCounts,
    /// Precision of the pseudo-labels handed to the invariance check.
    pub precision_before_filter: Option<f64>,
    pub precision_retained: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub split: SplitCounts,
    /// Keyed by model name: `supervised`, `dist_stage1`, `dist_stage2`, `st_stage1`, `st_stage2`.
    pub metrics: BTreeMap<String, EvalMetrics>,
    pub stages: BTreeMap<String, StageSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<BTreeMap<String, StageAudit>>,
    /// Oracle reads of unlabeled or test clips before evaluation started.
    pub oracle_reads_during_training: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedReport>,
    pub mean: BTreeMap<String, MeanMetrics>,
    /// Mean accuracy gain over the supervised baseline, in percentage points.
    pub improvement_over_supervised: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn new(config_hash: String, per_seed: Vec<SeedReport>) -> Self {
        let mut sums: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
        for s in &per_seed {
            for (name, m) in &s.metrics {
                let e = sums.entry(name.clone()).or_default();
                e.0 += m.accuracy;
                e.1 += m.macro_f1;
                e.2 += 1;
            }
        }
        let mean: BTreeMap<String, MeanMetrics> = sums
            .into_iter()
            .map(|(k, (a, f, n))| {
                (
                    k,
                    MeanMetrics {
                        accuracy: a / n as f64,
                        macro_f1: f / n as f64,
                    },
                )
            })
            .collect();
        let improvement_over_supervised = match mean.get("supervised") {
            Some(base) => mean
                .iter()
                .filter(|(k, _)| k.as_str() != "supervised")
                .map(|(k, m)| (k.clone(), 100.0 * (m.accuracy - base.accuracy)))
                .collect(),
            None => BTreeMap::new(),
        };
        MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash,
            seeds: per_seed.iter().map(|s| s.seed).collect(),
            per_seed,
            mean,
            improvement_over_supervised,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DistError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DistError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn mean_accuracy(&self, model: &str) -> Option<f64> {
        self.mean.get(model).map(|m| m.accuracy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics_from_predictions;

    fn seed_report(seed: u64, sup: &[usize], dist: &[usize]) -> SeedReport {
        let truth = [0, 1, 0, 1];
        let mut metrics = BTreeMap::new();
        metrics.insert("supervised".to_string(), metrics_from_predictions(sup, &truth, 2).unwrap());
        metrics.insert("dist_stage2".to_string(), metrics_from_predictions(dist, &truth, 2).unwrap());
        SeedReport {
            seed,
            split: SplitCounts { labeled: 1, unlabeled: 2, test: 4 },
            metrics,
            stages: BTreeMap::new(),
            audit: None,
            oracle_reads_during_training: 0,
        }
    }

    #[test]
    fn means_and_improvement() {
        let r = MetricsReport::new(
            "h".into(),
            vec![seed_report(1, &[0, 0, 0, 0], &[0, 1, 0, 1]), seed_report(2, &[0, 1, 0, 0], &[0, 1, 0, 0])],
        );
        assert_eq!(r.seeds, vec![1, 2]);
        assert_eq!(r.mean_accuracy("supervised"), Some(0.625));
        assert_eq!(r.mean_accuracy("dist_stage2"), Some(0.875));
        assert!((r.improvement_over_supervised["dist_stage2"] - 25.0).abs() < 1e-12);
        assert!(!r.improvement_over_supervised.contains_key("supervised"));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let r = MetricsReport::new("abc".into(), vec![seed_report(7, &[0, 1, 1, 1], &[0, 1, 0, 1])]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.json");
        r.save(&p).unwrap();
        let back = MetricsReport::load(&p).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), r.to_json());
        let text = r.to_json();
        assert!(text.find("\"dist_stage2\"").unwrap() < text.find("\"supervised\"").unwrap());
    }
}
