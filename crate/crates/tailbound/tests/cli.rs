//! End-to-end tests of the `tailbound` binary: exit-code contract, output
//! formats, and byte-level run determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailbound"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tailbound_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn solve_kappa_closed_form() {
    let out = bin()
        .args(["solve-kappa", "--law", "two_point", "--params", "a=0.5,b=3,p=0.8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let kappa = v["kappa"].as_f64().unwrap();
    assert!((kappa - 1.0).abs() < 1e-8, "kappa = {kappa}");
}

#[test]
fn solve_kappa_subcritical_exits_two() {
    let out = bin()
        .args(["solve-kappa", "--law", "two_point", "--params", "a=0.5,b=0.9,p=0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_kappa_missing_law_exits_one() {
    let out = bin().args(["solve-kappa", "--params", "a=0.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage") || err.contains("--law"), "stderr: {err}");
}

#[test]
fn sandwich_verify_exit_codes() {
    let params = r#"{"alpha": 0.3, "beta": 1.0, "lambda": 0.5}"#;
    let ok = bin()
        .args([
            "sandwich-verify",
            "--model",
            "arch_w",
            "--params",
            params,
            "--envs",
            "500",
            "--points",
            "40",
        ])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&ok.stderr));

    let corrupted = bin()
        .args([
            "sandwich-verify",
            "--model",
            "arch_w",
            "--params",
            params,
            "--envs",
            "500",
            "--points",
            "40",
            "--corrupt",
        ])
        .output()
        .unwrap();
    assert_eq!(corrupted.status.code(), Some(3), "corrupted bounds must exit 3");

    let usage = bin()
        .args([
            "sandwich-verify",
            "--model",
            "arch_w",
            "--params",
            params,
            "--points",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(usage.status.code(), Some(1), "--points 0 is a usage error");
}

fn small_config(dir: &Path) -> PathBuf {
    let config = serde_json::json!({
        "model_id": "affine",
        "params": {
            "m_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
            "q_law": {"constant": 1.0},
            "declare_nonarithmetic": true
        },
        "seed": 5,
        "n_samples": 20000,
        "mode": {"backward": {"depth": 150}},
        "record": "raw_state",
        "analysis": [
            {"op": "hill", "k": 400, "assert_index_in": [0.7, 1.3]},
            {"op": "solve_kappa", "assert_kappa_in": [0.999999, 1.000001]},
            {"op": "sandwich_verify", "envs": 300, "points": 30, "assert_max_violations": 0},
            {"op": "survival_plot"}
        ],
        "output_dir": dir.join("out")
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn run_produces_deterministic_outputs() {
    let dir = tmp_dir("run");
    let config = small_config(&dir);

    let first = bin().args(["run"]).arg(&config).output().unwrap();
    assert_eq!(
        first.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&first.stderr)
    );
    let out = dir.join("out");
    for file in ["samples.csv", "samples.json", "report.json", "plot_survival.txt"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let report1 = std::fs::read(out.join("report.json")).unwrap();
    let samples1 = std::fs::read(out.join("samples.csv")).unwrap();

    // Byte-identical on re-run with the same config.
    let second = bin().args(["run"]).arg(&config).output().unwrap();
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(report1, std::fs::read(out.join("report.json")).unwrap());
    assert_eq!(samples1, std::fs::read(out.join("samples.csv")).unwrap());

    // Report carries the assertions.
    let report: serde_json::Value = serde_json::from_slice(&report1).unwrap();
    assert_eq!(report["all_assertions_passed"], true);
    assert!(report.get("wall_time_ms").is_none(), "wall time must not be serialized");

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn run_unknown_model_exits_one() {
    let dir = tmp_dir("unknown");
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "model_id": "no_such_model",
            "seed": 1,
            "n_samples": 10,
            "mode": {"backward": {"depth": 5}},
            "analysis": [],
            "output_dir": dir.join("out")
        })
        .to_string(),
    )
    .unwrap();
    let out = bin().args(["run"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn run_failed_assertion_exits_three() {
    let dir = tmp_dir("assert");
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "model_id": "affine",
            "params": {
                "m_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                "q_law": {"constant": 1.0}
            },
            "seed": 5,
            "n_samples": 20000,
            "mode": {"backward": {"depth": 150}},
            "record": "raw_state",
            "analysis": [
                {"op": "hill", "k": 400, "assert_index_in": [5.0, 6.0]}
            ],
            "output_dir": dir.join("out")
        })
        .to_string(),
    )
    .unwrap();
    let out = bin().args(["run"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "failed declared assertion must exit 3");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn run_stage_error_removes_partial_outputs() {
    let dir = tmp_dir("partial");
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "model_id": "affine",
            "params": {
                "m_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                "q_law": {"constant": 1.0}
            },
            "seed": 5,
            "n_samples": 500,
            "mode": {"backward": {"depth": 100}},
            "record": "raw_state",
            "analysis": [
                {"op": "no_such_op"}
            ],
            "output_dir": dir.join("out")
        })
        .to_string(),
    )
    .unwrap();
    let out = bin().args(["run"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no_such_op"), "stage name must be reported: {stderr}");
    assert!(
        !dir.join("out").join("samples.csv").exists(),
        "partial outputs must be removed"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn shipped_presets_parse_and_reference_known_models() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let config: tailbound::cli::ExperimentConfig = serde_json::from_str(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(
            tailbound::models::REGISTERED.contains(&config.model_id.as_str()),
            "{}: unknown model {}",
            path.display(),
            config.model_id
        );
        assert!(!config.analysis.is_empty(), "{}: no analyses", path.display());
        count += 1;
    }
    assert!(count >= 10, "expected the full preset set, found {count}");
}

#[test]
fn run_exact_branch_config() {
    let dir = tmp_dir("exact");
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "model_id": "dual_exact",
            "params": {"p": 0.6},
            "seed": 3,
            "n_samples": 4000,
            "mode": {"exact_restarts": {"reps": 20, "burn_in": 100, "per_rep": 200}},
            "record": "raw_state",
            "analysis": [
                {"op": "hill", "k": 60, "assert_index_in": [0.5, 1.6]}
            ],
            "output_dir": dir.join("out")
        })
        .to_string(),
    )
    .unwrap();
    let out = bin().args(["run"]).arg(&config).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let _ = std::fs::remove_dir_all(&dir);
}
