//! Experiment configuration: a strict, sectioned TOML document.
//!
//! Missing keys take defaults. Unknown keys are errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentParams;
use crate::clipset::GeneratorParams;
use crate::error::{DistError, Result};
use crate::model::{ModelSpec, REFERENCE_ARCHITECTURE};
use crate::sampling::SamplingParams;
use crate::timeline::WindowParams;
use crate::trainer::TrainSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Load a saved clip set from this directory instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub num_clips: usize,
    pub num_classes: usize,
    pub frames_per_clip: usize,
    pub frame_size: usize,
    pub difficulty: f64,
    /// Generator seed; the dataset stays fixed across run seeds.
    pub seed: u64,
    /// Fraction of the non-test clips that keep their labels.
    pub labeled_fraction: f64,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            num_clips: 2000,
            num_classes: 4,
            frames_per_clip: 16,
            frame_size: 32,
            difficulty: 0.3,
            seed: 0,
            labeled_fraction: 1.0 / 16.0,
            test_fraction: 0.1,
        }
    }
}

impl DataConfig {
    pub fn generator(&self) -> GeneratorParams {
        GeneratorParams {
            num_clips: self.num_clips,
            num_classes: self.num_classes,
            frames_per_clip: self.frames_per_clip,
            frame_size: self.frame_size,
            difficulty: self.difficulty,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub architecture: String,
    pub input_pool: usize,
    pub channels: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: REFERENCE_ARCHITECTURE.to_string(),
            input_pool: 2,
            channels: 4,
            hidden: 8,
        }
    }
}

/// Optimizer schedule shared by teacher and students. Defaults to a 12-epoch
/// desk profile; the full-length schedule is `epochs = 40`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_gamma: f64,
    pub lr_step_every: usize,
    pub momentum: f64,
}

pub const DESK_EPOCHS: usize = 12;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::from(TrainSchedule {
            epochs: DESK_EPOCHS,
            ..TrainSchedule::default()
        })
    }
}

impl From<TrainSchedule> for TrainConfig {
    fn from(s: TrainSchedule) -> Self {
        TrainConfig {
            epochs: s.epochs,
            batch_size: s.batch_size,
            base_lr: s.base_lr,
            lr_gamma: s.lr_gamma,
            lr_step_every: s.lr_step_every,
            momentum: s.momentum,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            epochs: self.epochs,
            batch_size: self.batch_size,
            base_lr: self.base_lr,
            lr_gamma: self.lr_gamma,
            lr_step_every: self.lr_step_every,
            momentum: self.momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SslConfig {
    /// Also run the self-training ablation without invariance filtering.
    pub ablation: bool,
    /// Initialise the stage-2 student from the stage-1 student instead of fresh weights.
    pub stage2_warm_start: bool,
    /// Audit pseudo-labels against oracle labels after training.
    pub audit: bool,
    pub flush_last_window: bool,
    pub window_s: f64,
    pub overlap_s: f64,
    pub sampling: SamplingParams,
    pub augment: AugmentParams,
}

impl Default for SslConfig {
    fn default() -> Self {
        let w = WindowParams::default();
        SslConfig {
            ablation: true,
            stage2_warm_start: false,
            audit: true,
            flush_last_window: w.flush_last,
            window_s: w.window_s,
            overlap_s: w.overlap_s,
            sampling: SamplingParams::default(),
            augment: AugmentParams::default(),
        }
    }
}

impl SslConfig {
    pub fn window(&self) -> WindowParams {
        WindowParams {
            window_s: self.window_s,
            overlap_s: self.overlap_s,
            flush_last: self.flush_last_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("runs/dist"),
            seeds: vec![1, 2, 3],
            log_level: "info".to_string(),
        }
    }
}

const LOG_LEVELS: [&str; 6] = ["off", "error", "warn", "info", "debug", "trace"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ssl: SslConfig,
    pub run: RunConfig,
}

fn keyed(key: &str, e: DistError) -> DistError {
    match e {
        DistError::InvalidParameter { field, reason } => DistError::Config {
            key: format!("{key}.{field}"),
            reason,
        },
        other => other,
    }
}

fn bad(key: &str, reason: impl Into<String>) -> DistError {
    DistError::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(document: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(document).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .map_or_else(|| "document".to_string(), str::to_string);
            bad(&key, e.message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DistError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded. The output
    /// directory and log level do not affect results and are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.out_dir = PathBuf::new();
        c.run.log_level.clear();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.path.is_none() {
            d.generator().validate().map_err(|e| keyed("data", e))?;
        }
        if !(d.labeled_fraction > 0.0 && d.labeled_fraction <= 1.0) {
            return Err(bad("data.labeled_fraction", "must lie in (0, 1]"));
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(bad("data.test_fraction", "must lie in (0, 1)"));
        }
        self.train.schedule().validate().map_err(|e| keyed("train", e))?;
        self.ssl.sampling.validate().map_err(|e| keyed("ssl.sampling", e))?;
        self.ssl.augment.validate().map_err(|e| keyed("ssl.augment", e))?;
        self.ssl.window().validate().map_err(|e| keyed("ssl", e))?;
        if d.path.is_none() {
            self.model_spec(0).validate().map_err(|e| keyed("model", e))?;
        }
        if self.run.seeds.is_empty() {
            return Err(bad("run.seeds", "need at least one seed"));
        }
        if !LOG_LEVELS.contains(&self.run.log_level.as_str()) {
            return Err(bad("run.log_level", format!("expected one of {}", LOG_LEVELS.join(", "))));
        }
        Ok(())
    }

    /// Model spec for generated data of this config.
    pub fn model_spec(&self, init_seed: u64) -> ModelSpec {
        self.model_spec_for(self.data.num_classes, (self.data.frame_size, self.data.frame_size), init_seed)
    }

    pub fn model_spec_for(&self, num_classes: usize, frame_hw: (usize, usize), init_seed: u64) -> ModelSpec {
        ModelSpec {
            architecture: self.model.architecture.clone(),
            num_classes,
            frames: self.ssl.sampling.target_frames,
            height: frame_hw.0,
            width: frame_hw.1,
            input_pool: self.model.input_pool,
            channels: self.model.channels,
            hidden: self.model.hidden,
            init_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.train.epochs, DESK_EPOCHS);
        assert_eq!(c.data.labeled_fraction, 0.0625);
        assert_eq!(c.run.seeds, vec![1, 2, 3]);
        assert_eq!(c.ssl.augment, AugmentParams::default());
        assert_eq!(c.train.schedule(), TrainSchedule { epochs: 12, ..TrainSchedule::default() });
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = ExperimentConfig::parse("[train]\nbatch_size = 8\n[ssl.augment]\nmax_rotation_deg = 5.0\n").unwrap();
        assert_eq!((c.train.epochs, c.train.batch_size), (12, 8));
        assert_eq!(c.ssl.augment.max_rotation_deg, 5.0);
        assert_eq!(c.ssl.augment.blur_kernel, 5);
    }

    fn key_of(doc: &str) -> String {
        match ExperimentConfig::parse(doc).unwrap_err() {
            DistError::Config { key, .. } => key,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of("[data]\nlabeled_fraction = 0.0\n"), "data.labeled_fraction");
        assert_eq!(key_of("[data]\nlabeled_fractoin = 0.5\n"), "labeled_fractoin");
        assert_eq!(key_of("[train]\nepochs = 2\n"), "train.epochs");
        assert_eq!(key_of("[run]\nseeds = []\n"), "run.seeds");
        assert_eq!(key_of("[ssl.augment]\nblur_kernel = 4\n"), "ssl.augment.blur_kernel");
        assert_eq!(key_of("[data]\nnum_classes = 1\n"), "data.num_classes");
        assert_eq!(key_of("[data]\nframe_size = 30\n"), "model.height");
        let err = ExperimentConfig::parse("[train]\nepochs = \"many\"\n").unwrap_err();
        assert!(matches!(err, DistError::Config { .. }));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.epochs = 13;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.run.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), c.hash());
    }

    prop_compose! {
        fn valid_config()(
            num_clips in 8usize..5000,
            num_classes in 2usize..8,
            frames_per_clip in 1usize..40,
            size_mult in 1usize..12,
            difficulty in 0.0f64..=1.0,
            seed in any::<u64>(),
            labeled_fraction in 0.01f64..=1.0,
            test_fraction in 0.01f64..0.9,
            epochs in 3usize..60,
            batch_size in 1usize..64,
            base_lr in 1e-5f64..1.0,
            target_frames in 1usize..16,
            ablation in any::<bool>(),
            flush in any::<bool>(),
            seeds in prop::collection::vec(any::<u64>(), 1..5),
            path in prop::option::of("[a-z]{1,8}"),
        ) -> ExperimentConfig {
            let mut c = ExperimentConfig::default();
            c.data = DataConfig {
                path: path.map(PathBuf::from),
                num_clips: num_clips.max(num_classes),
                num_classes,
                frames_per_clip,
                frame_size: 4 * size_mult,
                difficulty,
                seed,
                labeled_fraction,
                test_fraction,
            };
            c.train.epochs = epochs;
            c.train.batch_size = batch_size;
            c.train.base_lr = base_lr;
            c.ssl.sampling.target_frames = target_frames;
            c.ssl.ablation = ablation;
            c.ssl.flush_last_window = flush;
            c.run.seeds = seeds;
            c
        }
    }

    proptest! {
        #[test]
        fn serialization_round_trips(c in valid_config()) {
            c.validate().unwrap();
            let text = c.to_toml();
            let back = ExperimentConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_toml(), text);
        }
    }
}
