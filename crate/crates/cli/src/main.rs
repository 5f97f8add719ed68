mod logging;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use dist_core::clipset::{generate_synthetic_dataset, split_labeled_unlabeled, ClipSet};
use dist_core::config::ExperimentConfig;
use dist_core::eval::evaluate;
use dist_core::model::Model;
use dist_core::pipeline::{audit_manifest, run_pipeline, seed_dir, Mode};
use dist_core::sampling::SamplingParams;
use dist_core::timeline::{
    cycle_phases, generate_phase_sequence, parse_phases, render_bands, timeline_predict, PhaseSequenceParams,
    WindowParams,
};
use dist_core::DistError;
use serde_json::json;

const LOG_FILE: &str = "run.log";

#[derive(Parser)]
#[command(name = "dist", version, about = "Dual invariance self-training experiments on synthetic clips")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "DIST_OUT_DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic clip set, split it and save it with frames.
    GenData,
    /// Teacher, both stages, evaluation and report.
    Run,
    /// Teacher and stage 1 only.
    Stage1,
    /// Stage 2 from stage-1 artifacts in the output directory.
    Stage2,
    /// Supervised baseline only.
    Supervised,
    /// Test-split metrics of a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Clip set directory (as written by `gen-data` or a run's `seed_*/data`).
        #[arg(long)]
        data: PathBuf,
    },
    /// Audit a pseudo-label manifest against oracle labels.
    Audit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Sliding-window inference over a synthetic phase sequence, with a band plot.
    Timeline {
        #[arg(long)]
        model: PathBuf,
        /// Phases as `class:seconds,...`; defaults to every class for 5 s.
        #[arg(long)]
        phases: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        difficulty: f64,
        /// Add a final window flush with the sequence end.
        #[arg(long)]
        flush_last_window: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<DistError>())
                .map_or("E_CLI", DistError::code);
            let msg: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!("error[{code}]: {}", msg.join(": "));
            ExitCode::FAILURE
        }
    }
}

/// Config with `--seed` and the output directory applied (flag > env > file).
fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let Some(path) = &cli.config else {
        eprintln!("{}", Cli::command().render_usage());
        bail!("--config is required for this command");
    };
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.run.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        config.run.out_dir = out.clone();
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData => gen_data(&resolve_config(&cli)?),
        Command::Run => pipeline(&resolve_config(&cli)?, Mode::Full),
        Command::Stage1 => pipeline(&resolve_config(&cli)?, Mode::Stage1),
        Command::Stage2 => pipeline(&resolve_config(&cli)?, Mode::Stage2),
        Command::Supervised => pipeline(&resolve_config(&cli)?, Mode::Supervised),
        Command::Eval { model, data } => {
            logging::init("warn", None)?;
            eval(model, data)
        }
        Command::Audit { manifest, data } => {
            logging::init("warn", None)?;
            audit(manifest, data)
        }
        Command::Timeline {
            model,
            phases,
            difficulty,
            flush_last_window,
        } => {
            logging::init("warn", None)?;
            let config = match &cli.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("timeline"));
            let model = Model::load(model)?;
            let phases = match phases {
                Some(p) => parse_phases(p)?,
                None => cycle_phases(model.num_classes(), 5.0),
            };
            let window = WindowParams {
                flush_last: *flush_last_window || config.ssl.flush_last_window,
                ..config.ssl.window()
            };
            let summary = timeline(
                &model,
                &TimelineJob {
                    phases,
                    difficulty: *difficulty,
                    frames_per_clip: config.data.frames_per_clip,
                    seed: cli.seed.unwrap_or(0),
                    window,
                },
                &out.join("timeline"),
            )?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}

fn gen_data(config: &ExperimentConfig) -> Result<()> {
    logging::init(&config.run.log_level, None)?;
    let seed = config.run.seeds[0];
    let set = generate_synthetic_dataset(&config.data.generator())?;
    let split = split_labeled_unlabeled(&set, config.data.labeled_fraction, config.data.test_fraction, seed)?;
    split.save(&config.run.out_dir)?;
    print!("{}", split.summary());
    println!("saved to {}", config.run.out_dir.display());
    Ok(())
}

fn pipeline(config: &ExperimentConfig, mode: Mode) -> Result<()> {
    let out = &config.run.out_dir;
    logging::init(&config.run.log_level, Some(&out.join(LOG_FILE)))?;
    log::info!("writing to {}", out.display());
    let report = run_pipeline(config, out, mode)?;
    if matches!(mode, Mode::Full | Mode::Stage2) {
        for &seed in &config.run.seeds {
            let student = seed_dir(out, seed).join("checkpoints/student_stage2.bin");
            let model = Model::load(&student)?;
            let job = TimelineJob {
                phases: cycle_phases(model.num_classes(), 5.0),
                difficulty: config.data.difficulty,
                frames_per_clip: config.data.frames_per_clip,
                seed,
                window: config.ssl.window(),
            };
            timeline(&model, &job, &out.join("plots").join(format!("timeline_seed{seed}")))?;
        }
    }
    for (name, m) in &report.mean {
        println!("{name:<12} accuracy {:.4}  macro-F1 {:.4}", m.accuracy, m.macro_f1);
    }
    for (name, gain) in &report.improvement_over_supervised {
        println!("{name:<12} {gain:+.2} points over supervised");
    }
    Ok(())
}

fn eval(model: &Path, data: &Path) -> Result<()> {
    let model = Model::load(model)?;
    let data = ClipSet::load(data)?;
    let sampling = SamplingParams::new(model.spec().frames)?;
    let metrics = evaluate(&model, &data, &sampling)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn audit(manifest: &Path, data: &Path) -> Result<()> {
    let data = ClipSet::load(data)?;
    let counts = audit_manifest(manifest, &data)?;
    let summary = json!({
        "counts": counts,
        "retained_precision": counts.retained_precision(),
        "overall_precision": counts.overall_precision(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

struct TimelineJob {
    phases: Vec<(usize, f64)>,
    difficulty: f64,
    frames_per_clip: usize,
    seed: u64,
    window: WindowParams,
}

/// Writes `<prefix>.tsv` and `<prefix>.png` (predicted band over the oracle band).
fn timeline(model: &Model, job: &TimelineJob, prefix: &Path) -> Result<serde_json::Value> {
    let spec = model.spec();
    let seq = generate_phase_sequence(&PhaseSequenceParams {
        num_classes: spec.num_classes,
        phases: job.phases.clone(),
        frames_per_clip: job.frames_per_clip,
        frame_size: spec.height,
        difficulty: job.difficulty,
        seed: job.seed,
    })?;
    let sampling = SamplingParams::new(spec.frames)?;
    let predicted = timeline_predict(model, &seq.frames, seq.fps, &job.window, &sampling)?;
    let oracle = seq.oracle_timeline(&job.window)?;
    let matches = predicted
        .windows
        .iter()
        .zip(&oracle.windows)
        .filter(|(p, o)| p.class == o.class)
        .count();

    let tsv = prefix.with_extension("tsv");
    if let Some(dir) = tsv.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&tsv, predicted.to_tsv()).with_context(|| format!("writing {}", tsv.display()))?;
    let raster = render_bands(&[&predicted, &oracle], seq.duration_s(), 20, 24);
    let png = prefix.with_extension("png");
    image::RgbImage::from_raw(raster.width, raster.height, raster.pixels)
        .context("band raster has the wrong size")?
        .save(&png)
        .with_context(|| format!("writing {}", png.display()))?;
    log::info!("timeline: {matches}/{} windows match the oracle", predicted.windows.len());
    Ok(json!({
        "windows": predicted.windows.len(),
        "matching_oracle": matches,
        "predicted": predicted.classes(),
        "oracle": oracle.classes(),
        "table": tsv,
        "plot": png,
    }))
}
