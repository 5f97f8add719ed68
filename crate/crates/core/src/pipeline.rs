//! The two-stage teacher/student loop, its on-disk artifacts and the run report.
//!
//! Stage 1 trains a teacher on the labeled split with three checkpoints, scores
//! every unlabeled clip, keeps the top half by reliability, applies the dual
//! invariance check and trains a student on the labeled clips plus the
//! survivors. Stage 2 promotes that student to teacher, pseudo-labels every
//! unlabeled clip, applies only the invariance check and trains the final
//! student. The self-training ablation runs the same code with the invariance
//! check switched off.
//!
//! Oracle labels of unlabeled and test clips are only read after training,
//! for evaluation and audits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use crate::clipset::{generate_synthetic_dataset, split_labeled_unlabeled, ClipSet, Split};
use crate::config::ExperimentConfig;
use crate::error::{DistError, Result};
use crate::eval::{evaluate, pseudo_label_audit, AuditCounts, EvalMetrics};
use crate::invariance::{filter_records, read_verdicts, write_verdicts, InvarianceVerdict};
use crate::io::write_atomic;
use crate::model::{Model, ModelSpec};
use crate::reliability::{
    read_manifest, score_unlabeled_set, select_top_half, write_manifest, PseudoLabelRecord, Stage,
};
use crate::report::{MetricsReport, SeedReport, SplitCounts, StageAudit, StageSummary};
use crate::sampling::uniform_sample;
use crate::seed::SeedMixer;
use crate::trainer::{checkpoint_epochs, train, CheckpointSet, TrainExample, TrainOptions, TrainOutcome};

pub const SNAPSHOT_FILE: &str = "config.snapshot.toml";
pub const REPORT_FILE: &str = "report.json";
pub const SUPERVISED: &str = "supervised";

/// Full invariance filtering, or the self-training ablation without it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Dist,
    SelfTraining,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Dist => "dist",
            Variant::SelfTraining => "st",
        }
    }

    fn file_prefix(self) -> &'static str {
        match self {
            Variant::Dist => "",
            Variant::SelfTraining => "st_",
        }
    }

    fn filters(self) -> bool {
        self == Variant::Dist
    }

    pub fn for_config(config: &ExperimentConfig) -> Vec<Variant> {
        if config.ssl.ablation {
            vec![Variant::Dist, Variant::SelfTraining]
        } else {
            vec![Variant::Dist]
        }
    }
}

pub fn model_key(variant: Variant, stage: Stage) -> String {
    format!("{}_stage{}", variant.name(), stage.number())
}

#[derive(Debug, Clone)]
pub struct StageArtifacts {
    pub stage: Stage,
    pub variant: Variant,
    /// Every pseudo-labeled clip with its `invariant` and `retained` flags.
    pub records: Vec<PseudoLabelRecord>,
    /// One verdict per pseudo-label handed to the invariance check.
    pub verdicts: Vec<InvarianceVerdict>,
    pub mixed_size: usize,
    pub student: Model,
}

impl StageArtifacts {
    pub fn key(&self) -> String {
        model_key(self.variant, self.stage)
    }

    pub fn retained(&self) -> impl Iterator<Item = &PseudoLabelRecord> {
        self.records.iter().filter(|r| r.retained)
    }

    pub fn summary(&self) -> StageSummary {
        StageSummary {
            scored: self.records.len(),
            filter_input: self.verdicts.len(),
            retained: self.retained().count(),
            mixed_size: self.mixed_size,
        }
    }
}

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed_{seed}"))
}

/// The clip set named by the config: loaded from `data.path` or generated.
pub fn load_base_data(config: &ExperimentConfig) -> Result<ClipSet> {
    match &config.data.path {
        Some(p) => ClipSet::load(p),
        None => generate_synthetic_dataset(&config.data.generator()),
    }
}

fn role_seed(seed: u64, role: &str) -> u64 {
    SeedMixer::new(seed).str(role).finish()
}

/// Set every record's flags from the verdicts and the retained id set.
fn annotate(records: &mut [PseudoLabelRecord], verdicts: &[InvarianceVerdict], retained: &HashSet<&str>) {
    let by_id: HashMap<&str, &InvarianceVerdict> = verdicts.iter().map(|v| (v.clip_id.as_str(), v)).collect();
    for r in records.iter_mut() {
        let v = by_id.get(r.clip_id.as_str());
        r.invariant = v.is_some_and(|v| v.keep);
        r.retained = retained.contains(r.clip_id.as_str());
        if let Some(v) = v.filter(|v| v.keep) {
            r.argmax_class = v.pred_uniform;
        }
    }
}

/// One seed of an experiment, rooted at `<run_dir>/seed_<seed>`.
pub struct SeedRun<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    dir: PathBuf,
    data: ClipSet,
}

impl<'a> SeedRun<'a> {
    /// Split `base` for this seed and persist the split under `data/`.
    pub fn create(config: &'a ExperimentConfig, base: &ClipSet, seed: u64, run_dir: &Path) -> Result<Self> {
        let data = split_labeled_unlabeled(
            base,
            config.data.labeled_fraction,
            config.data.test_fraction,
            role_seed(seed, "split"),
        )?;
        let dir = seed_dir(run_dir, seed);
        let data_dir = dir.join("data");
        if data.generator().is_some() {
            data.save_index(&data_dir)?;
        } else {
            data.save(&data_dir)?;
        }
        log::info!("seed {seed}: {}", data.summary().to_string().trim_end());
        Ok(SeedRun { config, seed, dir, data })
    }

    /// Reopen a seed directory written by an earlier invocation.
    pub fn open(config: &'a ExperimentConfig, seed: u64, run_dir: &Path) -> Result<Self> {
        let dir = seed_dir(run_dir, seed);
        let data_dir = dir.join("data");
        if !data_dir.join(crate::clipset::METADATA_FILE).exists() {
            return Err(DistError::MissingArtifacts("stage1".into()));
        }
        let data = ClipSet::load(&data_dir)?;
        Ok(SeedRun { config, seed, dir, data })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn data(&self) -> &ClipSet {
        &self.data
    }

    fn checkpoint_dir(&self) -> PathBuf {
        self.dir.join("checkpoints")
    }

    fn manifest_path(&self, variant: Variant, stage: Stage) -> PathBuf {
        self.dir
            .join("manifests")
            .join(format!("{}stage{}.tsv", variant.file_prefix(), stage.number()))
    }

    fn verdict_path(&self, variant: Variant, stage: Stage) -> PathBuf {
        self.dir
            .join("manifests")
            .join(format!("{}stage{}_verdicts.tsv", variant.file_prefix(), stage.number()))
    }

    fn student_path(&self, variant: Variant, stage: Stage) -> PathBuf {
        self.checkpoint_dir()
            .join(format!("{}student_stage{}.bin", variant.file_prefix(), stage.number()))
    }

    fn spec(&self, role: &str) -> ModelSpec {
        let clip = self.data.clips().first();
        let hw = clip.map_or((self.config.data.frame_size, self.config.data.frame_size), |c| {
            (c.frames().height(), c.frames().width())
        });
        self.config
            .model_spec_for(self.data.num_classes(), hw, role_seed(self.seed, &format!("{role}-init")))
    }

    fn fit(&self, role: &str, examples: &[TrainExample<'_>], checkpoints: bool, warm: Option<&Model>) -> Result<TrainOutcome> {
        let schedule = self.config.train.schedule();
        let spec = warm.map_or_else(|| self.spec(role), |m| m.spec().clone());
        log::info!("seed {}: training {role} on {} examples", self.seed, examples.len());
        let out = train(
            &spec,
            examples,
            &TrainOptions {
                schedule: &schedule,
                sampling: &self.config.ssl.sampling,
                augment: &self.config.ssl.augment,
                seed: role_seed(self.seed, &format!("{role}-train")),
                save_checkpoints: checkpoints,
                warm_start: warm,
            },
        )?;
        if let (Some(first), Some(last)) = (out.epoch_losses.first(), out.epoch_losses.last()) {
            log::info!("seed {}: {role} loss {first:.4} -> {last:.4}", self.seed);
        }
        Ok(out)
    }

    fn labeled_examples(&self) -> Vec<TrainExample<'_>> {
        self.data
            .in_split(Split::Labeled)
            .filter_map(|c| {
                c.label().map(|label| TrainExample {
                    id: c.id(),
                    frames: c.frames(),
                    label,
                })
            })
            .collect()
    }

    /// Labeled clips plus retained pseudo-labels.
    fn mixed_examples<'r>(&'r self, retained: impl Iterator<Item = &'r PseudoLabelRecord>) -> Result<Vec<TrainExample<'r>>> {
        let mut out = self.labeled_examples();
        for r in retained {
            let clip = self.data.get(&r.clip_id).ok_or_else(|| DistError::MissingClip(r.clip_id.clone()))?;
            out.push(TrainExample {
                id: clip.id(),
                frames: clip.frames(),
                label: r.argmax_class,
            });
        }
        Ok(out)
    }

    /// Train the teacher on the labeled split; it doubles as the supervised baseline.
    pub fn train_teacher(&self) -> Result<CheckpointSet> {
        let out = self.fit("teacher", &self.labeled_examples(), true, None)?;
        let ckpts = out
            .checkpoints
            .ok_or_else(|| DistError::param("checkpoints", "teacher training produced no checkpoints"))?;
        ckpts.save(&self.checkpoint_dir(), "teacher")?;
        Ok(ckpts)
    }

    pub fn load_teacher(&self) -> Result<CheckpointSet> {
        let epochs = checkpoint_epochs(self.config.train.epochs)?;
        let dir = self.checkpoint_dir();
        for e in [epochs.0, epochs.1, epochs.2] {
            if !CheckpointSet::path_for(&dir, "teacher", e).exists() {
                return Err(DistError::MissingArtifacts("stage1".into()));
            }
        }
        CheckpointSet::load(&dir, "teacher", epochs)
    }

    fn finish_stage(
        &self,
        stage: Stage,
        variant: Variant,
        mut records: Vec<PseudoLabelRecord>,
        verdicts: Vec<InvarianceVerdict>,
        retained_ids: HashSet<&str>,
        warm: Option<&Model>,
    ) -> Result<StageArtifacts> {
        annotate(&mut records, &verdicts, &retained_ids);
        let retained = records.iter().filter(|r| r.retained).count();
        if retained == 0 {
            log::warn!(
                "seed {}: {} retained no pseudo-labels; the student trains on labeled clips only",
                self.seed,
                model_key(variant, stage)
            );
        }
        write_manifest(&self.manifest_path(variant, stage), &records)?;
        write_verdicts(&self.verdict_path(variant, stage), &verdicts)?;
        let examples = self.mixed_examples(records.iter().filter(|r| r.retained))?;
        let mixed_size = examples.len();
        let role = format!("student{}", stage.number());
        let student = self.fit(&role, &examples, false, warm)?.model;
        student.save(&self.student_path(variant, stage))?;
        log::info!(
            "seed {}: {} kept {retained}/{} pseudo-labels ({} checked for invariance)",
            self.seed,
            model_key(variant, stage),
            records.len(),
            verdicts.len()
        );
        Ok(StageArtifacts {
            stage,
            variant,
            records,
            verdicts,
            mixed_size,
            student,
        })
    }

    /// Score, take the top half, filter, and train the stage-1 student.
    pub fn stage1(&self, teacher: &CheckpointSet, variant: Variant) -> Result<StageArtifacts> {
        let ssl = &self.config.ssl;
        let records = score_unlabeled_set(teacher, &self.data, &ssl.sampling)?;
        let top = select_top_half(&records)?;
        let filtered = filter_records(
            teacher.final_model(),
            &top,
            &self.data,
            &ssl.sampling,
            &ssl.augment,
            role_seed(self.seed, "filter-stage1"),
        )?;
        let kept: Vec<String> = if variant.filters() {
            filtered.kept.iter().map(|r| r.clip_id.clone()).collect()
        } else {
            top.iter().map(|r| r.clip_id.clone()).collect()
        };
        let ids = kept.iter().map(String::as_str).collect();
        self.finish_stage(Stage::One, variant, records, filtered.verdicts, ids, None)
    }

    /// Promote the stage-1 student, pseudo-label everything, filter, train the final student.
    pub fn stage2(&self, stage1: &StageArtifacts) -> Result<StageArtifacts> {
        let ssl = &self.config.ssl;
        let teacher = &stage1.student;
        let records = self
            .data
            .in_split(Split::Unlabeled)
            .map(|c| {
                Ok(PseudoLabelRecord {
                    clip_id: c.id().to_string(),
                    argmax_class: teacher.predict(&uniform_sample(c.frames(), &ssl.sampling)?)?,
                    reliability: None,
                    invariant: false,
                    retained: false,
                    stage: Stage::Two,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let filtered = filter_records(
            teacher,
            &records,
            &self.data,
            &ssl.sampling,
            &ssl.augment,
            role_seed(self.seed, "filter-stage2"),
        )?;
        let kept: Vec<String> = if stage1.variant.filters() {
            filtered.kept.iter().map(|r| r.clip_id.clone()).collect()
        } else {
            records.iter().map(|r| r.clip_id.clone()).collect()
        };
        let ids = kept.iter().map(String::as_str).collect();
        let warm = ssl.stage2_warm_start.then_some(teacher);
        self.finish_stage(Stage::Two, stage1.variant, records, filtered.verdicts, ids, warm)
    }

    /// Reload stage-1 output written by an earlier invocation.
    pub fn load_stage1(&self, variant: Variant) -> Result<StageArtifacts> {
        let paths = [
            self.manifest_path(variant, Stage::One),
            self.verdict_path(variant, Stage::One),
            self.student_path(variant, Stage::One),
        ];
        if paths.iter().any(|p| !p.exists()) {
            return Err(DistError::MissingArtifacts("stage1".into()));
        }
        let records = read_manifest(&paths[0])?;
        let verdicts = read_verdicts(&paths[1])?;
        let student = Model::load(&paths[2])?;
        let mixed_size = self.data.count(Split::Labeled) + records.iter().filter(|r| r.retained).count();
        Ok(StageArtifacts {
            stage: Stage::One,
            variant,
            records,
            verdicts,
            mixed_size,
            student,
        })
    }

    /// Test metrics for each named model. Reads test labels through the oracle.
    pub fn evaluate_models(&self, models: &[(String, &Model)]) -> Result<BTreeMap<String, EvalMetrics>> {
        models
            .iter()
            .map(|(name, m)| Ok((name.clone(), evaluate(m, &self.data, &self.config.ssl.sampling)?)))
            .collect()
    }

    /// Oracle audit of each stage's pseudo-labels.
    pub fn audit_stages(&self, stages: &[&StageArtifacts]) -> Result<BTreeMap<String, StageAudit>> {
        let oracle = self.data.oracle();
        stages
            .iter()
            .map(|s| {
                let counts = pseudo_label_audit(&s.records, &oracle)?;
                let checked: HashSet<&str> = s.verdicts.iter().map(|v| v.clip_id.as_str()).collect();
                let before: Vec<PseudoLabelRecord> = s
                    .records
                    .iter()
                    .filter(|r| checked.contains(r.clip_id.as_str()))
                    .map(|r| PseudoLabelRecord {
                        retained: true,
                        ..r.clone()
                    })
                    .collect();
                let before = pseudo_label_audit(&before, &oracle)?;
                Ok((
                    s.key(),
                    StageAudit {
                        counts,
                        precision_before_filter: before.retained_precision(),
                        precision_retained: counts.retained_precision(),
                    },
                ))
            })
            .collect()
    }

    fn split_counts(&self) -> SplitCounts {
        SplitCounts {
            labeled: self.data.count(Split::Labeled),
            unlabeled: self.data.count(Split::Unlabeled),
            test: self.data.count(Split::Test),
        }
    }

    /// Evaluate, optionally audit, and assemble this seed's report section.
    pub fn report(&self, teacher: &CheckpointSet, stages: &[&StageArtifacts]) -> Result<SeedReport> {
        let reads_during_training = self.data.oracle_reads();
        let mut models: Vec<(String, &Model)> = vec![(SUPERVISED.to_string(), teacher.final_model())];
        models.extend(stages.iter().map(|s| (s.key(), &s.student)));
        let metrics = self.evaluate_models(&models)?;
        let audit = if self.config.ssl.audit {
            Some(self.audit_stages(stages)?)
        } else {
            None
        };
        Ok(SeedReport {
            seed: self.seed,
            split: self.split_counts(),
            metrics,
            stages: stages.iter().map(|s| (s.key(), s.summary())).collect(),
            audit,
            oracle_reads_during_training: reads_during_training,
        })
    }
}

/// Which part of the pipeline a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Teacher only, reported as the supervised baseline.
    Supervised,
    /// Teacher and stage 1.
    Stage1,
    /// Stage 2 on top of stage-1 artifacts already on disk.
    Stage2,
    /// Everything.
    Full,
}

fn seed_pipeline(config: &ExperimentConfig, base: Option<&ClipSet>, seed: u64, run_dir: &Path, mode: Mode) -> Result<SeedReport> {
    let run = match (mode, base) {
        (Mode::Stage2, _) => SeedRun::open(config, seed, run_dir)?,
        (_, Some(base)) => SeedRun::create(config, base, seed, run_dir)?,
        (_, None) => return Err(DistError::param("data", "no base clip set supplied")),
    };
    let teacher = if mode == Mode::Stage2 {
        run.load_teacher()?
    } else {
        run.train_teacher().map_err(|e| e.in_stage("stage1"))?
    };
    let mut stages = Vec::new();
    if mode != Mode::Supervised {
        for variant in Variant::for_config(config) {
            let s1 = if mode == Mode::Stage2 {
                run.load_stage1(variant)?
            } else {
                run.stage1(&teacher, variant).map_err(|e| e.in_stage("stage1"))?
            };
            if mode != Mode::Stage1 {
                let s2 = run.stage2(&s1).map_err(|e| e.in_stage("stage2"))?;
                stages.push(s1);
                stages.push(s2);
            } else {
                stages.push(s1);
            }
        }
    }
    let refs: Vec<&StageArtifacts> = stages.iter().collect();
    run.report(&teacher, &refs)
}

/// Run `mode` for every configured seed under `run_dir`, writing the config
/// snapshot and `report.json`.
pub fn run_pipeline(config: &ExperimentConfig, run_dir: &Path, mode: Mode) -> Result<MetricsReport> {
    config.validate()?;
    write_atomic(&run_dir.join(SNAPSHOT_FILE), config.to_toml().as_bytes())?;
    let base = if mode == Mode::Stage2 {
        None
    } else {
        Some(load_base_data(config)?)
    };
    let per_seed = config
        .run
        .seeds
        .iter()
        .map(|&seed| seed_pipeline(config, base.as_ref(), seed, run_dir, mode))
        .collect::<Result<Vec<_>>>()?;
    let report = MetricsReport::new(config.hash(), per_seed);
    report.save(&run_dir.join(REPORT_FILE))?;
    for (name, m) in &report.mean {
        log::info!("mean {name}: accuracy {:.4}, macro-F1 {:.4}", m.accuracy, m.macro_f1);
    }
    Ok(report)
}

/// The full two-stage pipeline plus evaluation.
pub fn run_dist(config: &ExperimentConfig, run_dir: &Path) -> Result<MetricsReport> {
    run_pipeline(config, run_dir, Mode::Full)
}

/// Audit counts for a manifest against the oracle labels of `data`.
pub fn audit_manifest(manifest: &Path, data: &ClipSet) -> Result<AuditCounts> {
    pseudo_label_audit(&read_manifest(manifest)?, &data.oracle())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.data.num_clips = 48;
        c.data.frames_per_clip = 8;
        c.data.frame_size = 16;
        c.data.labeled_fraction = 0.25;
        c.data.test_fraction = 0.25;
        c.train.epochs = 3;
        c.ssl.sampling.target_frames = 4;
        c.run.seeds = vec![5];
        c
    }

    #[test]
    fn annotate_sets_flags() {
        let mut recs: Vec<PseudoLabelRecord> = ["a", "b", "c"]
            .iter()
            .map(|id| PseudoLabelRecord {
                clip_id: id.to_string(),
                argmax_class: 1,
                reliability: Some(0.3),
                invariant: false,
                retained: false,
                stage: Stage::One,
            })
            .collect();
        let verdicts = vec![
            InvarianceVerdict { clip_id: "a".into(), pred_uniform: 1, pred_augmented: 1, keep: true },
            InvarianceVerdict { clip_id: "b".into(), pred_uniform: 1, pred_augmented: 0, keep: false },
        ];
        annotate(&mut recs, &verdicts, &HashSet::from(["a"]));
        let flags: Vec<(bool, bool)> = recs.iter().map(|r| (r.invariant, r.retained)).collect();
        assert_eq!(flags, vec![(true, true), (false, false), (false, false)]);
    }

    #[test]
    fn full_run_writes_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let report = run_dist(&config, dir.path()).unwrap();
        let keys: Vec<&String> = report.mean.keys().collect();
        assert_eq!(keys, ["dist_stage1", "dist_stage2", "st_stage1", "st_stage2", "supervised"]);
        let s = seed_dir(dir.path(), 5);
        for f in [
            "data/metadata.json",
            "checkpoints/teacher_e1.bin",
            "checkpoints/teacher_e2.bin",
            "checkpoints/teacher_e3.bin",
            "checkpoints/student_stage1.bin",
            "checkpoints/student_stage2.bin",
            "checkpoints/st_student_stage2.bin",
            "manifests/stage1.tsv",
            "manifests/stage2.tsv",
            "manifests/st_stage1.tsv",
            "manifests/stage1_verdicts.tsv",
        ] {
            assert!(s.join(f).exists(), "{f} missing");
        }
        assert!(dir.path().join(SNAPSHOT_FILE).exists());
        assert!(dir.path().join(REPORT_FILE).exists());
        let seed = &report.per_seed[0];
        assert_eq!(seed.oracle_reads_during_training, 0);
        let s1 = seed.stages["dist_stage1"];
        assert_eq!(s1.scored, seed.split.unlabeled);
        assert!(s1.retained <= s1.filter_input && s1.filter_input <= s1.scored.div_ceil(2));
        assert_eq!(s1.mixed_size, seed.split.labeled + s1.retained);
        let st2 = seed.stages["st_stage2"];
        assert_eq!(st2.retained, st2.scored);
        let audit = seed.audit.as_ref().unwrap();
        assert_eq!(audit["dist_stage2"].counts.total(), seed.split.unlabeled);

        let snapshot = ExperimentConfig::load(&dir.path().join(SNAPSHOT_FILE)).unwrap();
        assert_eq!(snapshot, config);
    }

    #[test]
    fn stage2_requires_stage1_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_pipeline(&tiny_config(), dir.path(), Mode::Stage2).unwrap_err();
        assert_eq!(err.to_string(), "stage1 artifacts missing");
    }

    #[test]
    fn staged_invocations_match_a_full_run() {
        let config = tiny_config();
        let full = tempfile::tempdir().unwrap();
        let staged = tempfile::tempdir().unwrap();
        let a = run_dist(&config, full.path()).unwrap();
        run_pipeline(&config, staged.path(), Mode::Stage1).unwrap();
        let b = run_pipeline(&config, staged.path(), Mode::Stage2).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn all_labeled_reduces_to_supervised_training() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        config.data.labeled_fraction = 1.0;
        config.ssl.ablation = false;
        let report = run_dist(&config, dir.path()).unwrap();
        let seed = &report.per_seed[0];
        assert_eq!(seed.split.unlabeled, 0);
        assert_eq!(seed.stages["dist_stage1"].retained, 0);
        assert_eq!(seed.stages["dist_stage2"].mixed_size, seed.split.labeled);
    }
}
