use std::path::PathBuf;
use std::process::Command;

use star_cli::fixtures::fixture_integrity;
use star_core::attribution::{load_suite, Category};
use star_core::model::{save_checkpoint, Model, ModelConfig};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn star(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_star")).args(args).output().unwrap()
}

#[test]
fn shipped_fixtures_match_manifest() {
    let report = fixture_integrity(&fixtures()).unwrap();
    assert!(report.ok(), "{report}");
    assert!(report.checked >= 20);
}

#[test]
fn diagnostic_suite_has_64_prompts() {
    let pairs = load_suite(&fixtures().join("suite/diagnostic.jsonl")).unwrap();
    assert_eq!(pairs.len() * 2, 64);
    let empathy = pairs.iter().filter(|p| p.category == Category::Empathy).count();
    assert_eq!(empathy, 16);
}

#[test]
fn missing_config_is_an_input_error() {
    let out = star(&["run", "--config", "/nonexistent/experiment.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));
}

#[test]
fn missing_checkpoint_is_an_input_error() {
    let cfg = fixtures().join("configs/support.toml");
    let out = star(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        "/nonexistent/model.ckpt",
        "--prompt",
        "hello",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_override_is_a_usage_error() {
    let out = star(&["train", "--set", "steer.bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_with_a_fresh_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let model = Model::new(ModelConfig {
        max_context: 256,
        ..ModelConfig::tiny()
    })
    .unwrap();
    save_checkpoint(&model, &ckpt).unwrap();
    let out = star(&[
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--layer",
        "0",
        "--alpha",
        "1.0",
        "--set",
        "decode.max_new_tokens=5",
        "--prompt",
        "I lost my job today.",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fixtures_subcommand_reports_intact() {
    let out = star(&["fixtures", "--dir", fixtures().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("all fixtures intact"));
}
