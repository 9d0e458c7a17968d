//! Binary-level tests: flags, artifacts, and the exit-code contract
//! (0 success, 1 validation, 2 runtime failure, 3 partial).

use std::path::Path;
use std::process::{Command, Output};

fn memetron_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_memetron"))
}

fn write_config(dir: &Path, output_dir: &Path, budget_calls: u64) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let config = serde_json::json!({
        "schema_version": 1,
        "algorithm": "memetron",
        "backend": {"kind": "simulated", "alphabet": ["0", "1"], "length": 8},
        "reward": {"kind": "scalar", "function": {"type": "neg_levenshtein", "target": "10110100"}},
        "budget": {"max_model_calls": budget_calls, "max_reward_evals": budget_calls},
        "seed": 7,
        "output_dir": output_dir
    });
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn write_prompts(dir: &Path, n: usize) -> std::path::PathBuf {
    let path = dir.join("prompts.jsonl");
    let lines: Vec<String> = (0..n)
        .map(|i| format!("{{\"id\":\"q{i}\",\"text\":\"question {i}\"}}"))
        .collect();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn run_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn run_analyze_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_config(dir.path(), &run_dir, 1_000_000);
    let prompts = write_prompts(dir.path(), 3);

    let output = memetron_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--prompts")
        .arg(&prompts)
        .args(["--workers", "2"])
        .output()
        .unwrap();
    run_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("3 completed, 0 failed"), "{stdout}");
    assert!(run_dir.join("manifest.json").exists());
    assert!(run_dir.join("history_q0.jsonl").exists());
    assert!(run_dir.join("log_q2.jsonl").exists());

    let output = memetron_bin()
        .arg("analyze")
        .arg(&run_dir)
        .args(["--fdr", "0.05"])
        .output()
        .unwrap();
    run_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("gen 0 vs 3"), "{stdout}");
    assert!(run_dir.join("report.csv").exists());
    assert!(run_dir.join("summary.json").exists());

    for format in ["csv", "jsonl"] {
        let output = memetron_bin()
            .arg("export")
            .arg(&run_dir)
            .args(["--format", format])
            .output()
            .unwrap();
        run_ok(&output);
        assert!(run_dir.join(format!("export.{format}")).exists());
    }
}

#[test]
fn empty_prompts_file_is_validation_error_without_run_dir() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_config(dir.path(), &run_dir, 1_000_000);
    let prompts = dir.path().join("prompts.jsonl");
    std::fs::write(&prompts, "").unwrap();

    let output = memetron_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--prompts")
        .arg(&prompts)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(!run_dir.exists(), "no run directory on validation failure");
}

#[test]
fn invalid_config_is_validation_error_with_field_and_reason() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    // Simulated backend without a seed.
    std::fs::write(
        &config,
        serde_json::json!({
            "schema_version": 1,
            "algorithm": "genetron",
            "backend": {"kind": "simulated", "alphabet": ["0", "1"], "length": 4},
            "reward": {"kind": "scalar", "function": {"type": "rugged", "seed": 1}},
            "output_dir": dir.path().join("run")
        })
        .to_string(),
    )
    .unwrap();
    let prompts = write_prompts(dir.path(), 1);

    let output = memetron_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--prompts")
        .arg(&prompts)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("config.seed"), "{stderr}");
}

#[test]
fn budget_exhaustion_is_partial_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    // Enough to initialize (16 calls) but not to finish a generation.
    let config = write_config(dir.path(), &run_dir, 30);
    let prompts = write_prompts(dir.path(), 1);

    let output = memetron_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--prompts")
        .arg(&prompts)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(run_dir.join("history_q0.jsonl").exists(), "artifacts still valid");
}

#[test]
fn all_prompts_failing_is_runtime_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    // Too small even for the initial population.
    let config = write_config(dir.path(), &run_dir, 2);
    let prompts = write_prompts(dir.path(), 2);

    let output = memetron_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--prompts")
        .arg(&prompts)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn analyze_missing_generation_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_config(dir.path(), &run_dir, 1_000_000);
    let prompts = write_prompts(dir.path(), 1);
    run_ok(
        &memetron_bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--prompts")
            .arg(&prompts)
            .output()
            .unwrap(),
    );

    let output = memetron_bin()
        .arg("analyze")
        .arg(&run_dir)
        .args(["--compare", "0:9"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("generation 9"), "{stderr}");
}

#[test]
fn resume_completes_remaining_prompts() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_config(dir.path(), &run_dir, 1_000_000);
    let two = write_prompts(dir.path(), 2);
    run_ok(
        &memetron_bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--prompts")
            .arg(&two)
            .output()
            .unwrap(),
    );
    let before = std::fs::read(run_dir.join("history_q0.jsonl")).unwrap();

    let three = write_prompts(dir.path(), 3);
    let output = memetron_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--prompts")
        .arg(&three)
        .arg("--resume")
        .arg(&run_dir)
        .output()
        .unwrap();
    run_ok(&output);
    assert!(run_dir.join("history_q2.jsonl").exists());
    let after = std::fs::read(run_dir.join("history_q0.jsonl")).unwrap();
    assert_eq!(before, after, "completed prompt was not re-run");
}

#[test]
fn same_seed_reproduces_identical_histories() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = write_prompts(dir.path(), 2);
    let mut checksums = Vec::new();
    for attempt in 0..2 {
        let run_dir = dir.path().join(format!("run{attempt}"));
        let config = write_config(dir.path(), &run_dir, 1_000_000);
        run_ok(
            &memetron_bin()
                .args(["run", "--config"])
                .arg(&config)
                .arg("--prompts")
                .arg(&prompts)
                .output()
                .unwrap(),
        );
        let mut bytes = Vec::new();
        for id in ["q0", "q1"] {
            bytes.extend(std::fs::read(run_dir.join(format!("history_{id}.jsonl"))).unwrap());
        }
        checksums.push(bytes);
    }
    assert_eq!(checksums[0], checksums[1]);
}
