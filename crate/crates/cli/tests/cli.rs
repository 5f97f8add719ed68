use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dist(args: &[&str], cwd: &Path, env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dist"));
    cmd.args(args).current_dir(cwd).env_remove("DIST_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("DIST_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, out_dir: &str) -> String {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        format!(
            "[data]\nnum_clips = 80\nlabeled_fraction = 0.25\n[train]\nepochs = 3\n[run]\nout_dir = \"{out_dir}\"\nseeds = [1]\nlog_level = \"warn\"\n"
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn output_directory_precedence_is_flag_then_env_then_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "from_config");

    let out = dist(&["gen-data", "--config", &config], tmp.path(), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("from_config/metadata.json").exists());

    let env_dir = tmp.path().join("from_env");
    let out = dist(&["gen-data", "--config", &config], tmp.path(), Some(&env_dir));
    assert!(out.status.success());
    assert!(env_dir.join("metadata.json").exists());

    let flag_dir = tmp.path().join("from_flag");
    let out = dist(
        &["gen-data", "--config", &config, "--out", flag_dir.to_str().unwrap()],
        tmp.path(),
        Some(&env_dir.join("unused")),
    );
    assert!(out.status.success());
    assert!(flag_dir.join("metadata.json").exists());
    assert!(!env_dir.join("unused").exists());
}

#[test]
fn stage2_without_stage1_fails_with_a_coded_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "empty_run");
    let out = dist(&["stage2", "--config", &config], tmp.path(), None);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap();
    assert!(line.starts_with("error[E_ARTIFACTS]"), "{stderr}");
    assert!(line.contains("stage1 artifacts missing"), "{stderr}");
}

#[test]
fn stage1_then_stage2_completes_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "staged");
    let out = dist(&["stage1", "--config", &config, "--seed", "2"], tmp.path(), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = dist(&["stage2", "--config", &config, "--seed", "2"], tmp.path(), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run = tmp.path().join("staged");
    assert!(run.join("seed_2/checkpoints/student_stage2.bin").exists());
    assert!(run.join("plots/timeline_seed2.png").exists());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"], serde_json::json!([2]));
    assert!(report["mean"]["dist_stage2"]["accuracy"].is_f64());
}

#[test]
fn missing_config_and_bad_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dist(&["run"], tmp.path(), None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[data]\nnum_clipz = 10\n").unwrap();
    let out = dist(&["run", "--config", bad.to_str().unwrap()], tmp.path(), None);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[E_CONFIG]") && stderr.contains("num_clipz"), "{stderr}");
}

#[test]
fn eval_and_audit_read_run_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "r");
    assert!(dist(&["stage1", "--config", &config], tmp.path(), None).status.success());
    let seed = tmp.path().join("r/seed_1");
    let data = seed.join("data");

    let out = dist(
        &[
            "eval",
            "--model",
            seed.join("checkpoints/student_stage1.bin").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ],
        tmp.path(),
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((0.0..=1.0).contains(&metrics["accuracy"].as_f64().unwrap()));

    let out = dist(
        &[
            "audit",
            "--manifest",
            seed.join("manifests/stage1.tsv").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ],
        tmp.path(),
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let audit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = &audit["counts"];
    let total: u64 = ["correct_retained", "incorrect_retained", "correct_discarded", "incorrect_discarded"]
        .iter()
        .map(|k| c[k].as_u64().unwrap())
        .sum();
    // 80 clips: 8 test, 18 labeled, 54 unlabeled
    assert_eq!(total, 54);
}
