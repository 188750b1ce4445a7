//! End-to-end CLI tests driving the real binary, including the
//! reproducibility acceptance criterion: identical seeds and config
//! give byte-identical artifacts.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anchorlab"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn gen_env(dir: &Path, seed: u64, name: &str) -> PathBuf {
    let out = dir.join(name);
    let status = bin()
        .args([
            "gen-env",
            "--seed",
            &seed.to_string(),
            "--pages",
            "40",
            "--hops",
            "2",
            "--tasks",
            "8",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    out
}

fn train_run(dir: &Path, corpus: &Path, out_name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(out_name);
    let mut cmd = bin();
    cmd.args(["train", "--corpus"])
        .arg(corpus)
        .args(["--out"])
        .arg(&out)
        .args([
            "--seed",
            "3",
            "--group-size",
            "4",
            "--stage1-epochs",
            "2",
            "--stage2-epochs",
            "2",
            "--max-steps",
            "5",
            "--batch-size",
            "0",
        ])
        .args(extra);
    let output = cmd.output().unwrap();
    assert!(
        output.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    out
}

#[test]
fn gen_env_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_env(dir.path(), 7, "a.json");
    let b = gen_env(dir.path(), 7, "b.json");
    assert_eq!(read(&a), read(&b));
    let c = gen_env(dir.path(), 8, "c.json");
    assert_ne!(read(&a), read(&c));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let output = bin().args(["gen-env", "--seed", "7"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["eval", "--checkpoint", "missing.json", "--tasks", "missing.json", "--out"])
        .arg(dir.path().join("s.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn unknown_algo_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen_env(dir.path(), 7, "c.json");
    let output = bin()
        .args(["train", "--algo", "mystery", "--corpus"])
        .arg(&corpus)
        .args(["--out"])
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn criterion_11_cli_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen_env(dir.path(), 7, "corpus.json");

    let run_a = train_run(dir.path(), &corpus, "run_a", &[]);
    let run_b = train_run(dir.path(), &corpus, "run_b", &[]);
    for file in ["metrics.csv", "params.json", "checkpoint.json", "resolved_config.json"] {
        assert_eq!(
            read(&run_a.join(file)),
            read(&run_b.join(file)),
            "{file} differs between identical runs"
        );
    }

    // eval twice
    let eval = |name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["eval", "--checkpoint"])
            .arg(run_a.join("params.json"))
            .args(["--tasks"])
            .arg(&corpus)
            .args(["--k", "3", "--seed", "5", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        out
    };
    assert_eq!(read(&eval("eval_a.json")), read(&eval("eval_b.json")));

    // plot twice
    let plot = |name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["plot", "--metrics"])
            .arg(run_a.join("metrics.csv"))
            .args(["--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        out
    };
    assert_eq!(read(&plot("curves_a.svg")), read(&plot("curves_b.svg")));
    println!("criterion 11 (reproducibility): PASS - gen-env, train, eval, and plot artifacts byte-identical across reruns");
}

#[test]
fn interrupted_training_resumes_to_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen_env(dir.path(), 7, "corpus.json");

    // uninterrupted 2+2 epoch run
    let full = train_run(dir.path(), &corpus, "full", &[]);

    // run only stage 1 (same epoch specs as the full schedule's first
    // half), then resume into the full schedule
    let resumed = train_run(
        dir.path(),
        &corpus,
        "resumed",
        &["--stage2-epochs", "0", "--checkpoint-every", "1"],
    );
    let out = bin()
        .args(["train", "--corpus"])
        .arg(&corpus)
        .args(["--out"])
        .arg(&resumed)
        .args([
            "--seed",
            "3",
            "--group-size",
            "4",
            "--stage1-epochs",
            "2",
            "--stage2-epochs",
            "2",
            "--max-steps",
            "5",
            "--batch-size",
            "0",
            "--resume",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "resume failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(read(&full.join("params.json")), read(&resumed.join("params.json")));
    assert_eq!(read(&full.join("metrics.csv")), read(&resumed.join("metrics.csv")));
}

#[test]
fn eval_summary_has_the_declared_fields() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen_env(dir.path(), 7, "corpus.json");
    let run = train_run(dir.path(), &corpus, "run", &[]);
    let summary_path = dir.path().join("summary.json");
    let status = bin()
        .args(["eval", "--checkpoint"])
        .arg(run.join("params.json"))
        .args(["--tasks"])
        .arg(&corpus)
        .args(["--k", "3", "--out"])
        .arg(&summary_path)
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary_path).unwrap()).unwrap();
    for field in ["pass_at_1", "pass_at_3", "mean_tool_calls", "ablation_gap"] {
        assert!(summary.get(field).is_some(), "missing {field}");
    }
}

#[test]
fn ablate_writes_the_results_csv() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen_env(dir.path(), 7, "corpus.json");
    let run = train_run(dir.path(), &corpus, "run", &[]);
    let csv_path = dir.path().join("ablation.csv");
    let summary_path = dir.path().join("ablation.json");
    let output = bin()
        .args(["ablate", "--kind", "anchor", "--checkpoint"])
        .arg(run.join("params.json"))
        .args(["--tasks"])
        .arg(&corpus)
        .args(["--seed", "4", "--base-rollouts", "6", "--continuations", "4", "--out"])
        .arg(&csv_path)
        .args(["--summary"])
        .arg(&summary_path)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "ablate failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("task_id,condition,pass_at_8"));
    assert!(csv.lines().count() > 1);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary_path).unwrap()).unwrap();
    assert!(summary.get("gap").is_some());
}

#[test]
fn learn_rubrics_passes_on_a_separable_label_set() {
    let dir = tempfile::tempdir().unwrap();
    // insights + separable labels on disk
    let insights = dir.path().join("insights.jsonl");
    std::fs::write(
        &insights,
        concat!(
            r#"{"query_id":"q0","plan":"p","insight_text":"covers both hops","provenance":{"kind":"success"}}"#,
            "\n",
            r#"{"query_id":"q1","plan":"p","insight_text":"wrong relation first","provenance":{"kind":"failure"}}"#,
            "\n"
        ),
    )
    .unwrap();
    let labels = dir.path().join("labels.jsonl");
    let query = "Starting from Velora , follow capital , then follow hue . What do you reach ?";
    let mut rows = String::new();
    for i in 0..4 {
        let (plan, label) = if i % 2 == 0 {
            ("goals 2 find capital via search find hue via search", "correct")
        } else {
            ("goals 1 consider ally via answer", "incorrect")
        };
        rows.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "query_id": format!("q{i}"),
                "query_text": query,
                "plan": plan,
                "human_label": label,
            })
        ));
    }
    std::fs::write(&labels, rows).unwrap();
    let rubrics_path = dir.path().join("rubrics.json");
    anchorlab::reward::RubricSet::seeded().save(&rubrics_path).unwrap();

    let output = bin()
        .args(["learn-rubrics", "--insights"])
        .arg(&insights)
        .args(["--labels"])
        .arg(&labels)
        .args(["--rubrics"])
        .arg(&rubrics_path)
        .args(["--max-iters", "3", "--out"])
        .arg(dir.path().join("out.json"))
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "learn-rubrics failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("passed true"), "stdout: {stdout}");
}
