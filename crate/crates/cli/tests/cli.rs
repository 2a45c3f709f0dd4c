use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedre"))
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    let text = format!(
        r#"{{
  "dataset": {{ "kind": "blobs", "num_classes": 3, "per_class": 20 }},
  "num_clients": 3,
  "rounds": 2,
  "seeds": [0, 1]{extra}
}}"#
    );
    std::fs::write(&p, text).unwrap();
    p
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn validate_accepts_good_and_names_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "");
    ok(&bin().arg("validate").arg(&good).output().unwrap());

    let bad = write_config(dir.path(), r#", "roundz": 3"#);
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("roundz"));
}

#[test]
fn run_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    ok(&bin()
        .arg("run")
        .arg(&cfg)
        .env("FEDRE_OUTPUT_DIR", &out_dir)
        .output()
        .unwrap());
    let jsonl = std::fs::read_to_string(out_dir.join("metrics.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 2 * 2);
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("seed,round,mean_acc,upload,broadcast")
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn flag_overrides_config_output() {
    let dir = tempfile::tempdir().unwrap();
    let from_cfg = dir.path().join("cfg_out");
    let cfg = write_config(
        dir.path(),
        &format!(r#", "output": {}"#, serde_json_str(&from_cfg)),
    );
    let flagged = dir.path().join("flag_out");
    ok(&bin()
        .arg("--output-dir")
        .arg(&flagged)
        .arg("run")
        .arg(&cfg)
        .env_remove("FEDRE_OUTPUT_DIR")
        .output()
        .unwrap());
    assert!(flagged.join("metrics.csv").exists());
    assert!(!from_cfg.exists());
}

fn serde_json_str(p: &Path) -> String {
    format!("{:?}", p.to_str().unwrap())
}

#[test]
fn sweep_writes_one_line_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    ok(&bin()
        .args(["sweep"])
        .arg(&cfg)
        .args(["--key", "unified_dim", "--values", "2", "4"])
        .env("FEDRE_OUTPUT_DIR", &out_dir)
        .output()
        .unwrap());
    let text = std::fs::read_to_string(out_dir.join("sweep.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn sweep_rejects_unknown_key_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = bin()
        .args(["sweep"])
        .arg(&cfg)
        .args(["--key", "no_such_key", "--values", "1"])
        .env("FEDRE_OUTPUT_DIR", dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn invert_appends_tagged_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#", "attack": { "steps": 20 }"#);
    let out_dir = dir.path().join("out");
    for _ in 0..2 {
        ok(&bin()
            .arg("invert")
            .arg(&cfg)
            .env("FEDRE_OUTPUT_DIR", &out_dir)
            .output()
            .unwrap());
    }
    let text = std::fs::read_to_string(out_dir.join("inversions.jsonl")).unwrap();
    // 2 seeds x 3 clients x 3 target kinds, written twice.
    assert_eq!(text.lines().count(), 2 * 2 * 3 * 3);
    for kind in ["raw", "prototype", "entangled"] {
        assert!(text.contains(&format!("\"target_kind\":\"{kind}\"")));
    }
}

#[test]
fn missing_file_fails_cleanly() {
    let out = bin()
        .args(["run", "/no/such/config.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/config.json"));
}
