//! End-to-end checks of the `llmsr` binary against scripted transcripts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use llmsr::engine::RunLog;
use llmsr::llm::join_transcript;

fn llmsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llmsr"))
        .args(args)
        .env_remove("LLMSR_LOG")
        .output()
        .unwrap()
}

fn answer(exprs: &[&str]) -> String {
    format!("Scratchpad: noted.\nBEGIN EXPRESSIONS\n{}\nEND EXPRESSIONS", exprs.join("\n"))
}

fn langmuir_transcript(dir: &Path) -> String {
    let t = join_transcript(&[
        answer(&["c1*x1", "c1+c2*x1", "c1*x1*x1"]),
        answer(&["x1*c3/(x1+c4)", "c1*x1/(c2+x1*x1)", "c1-c2/x1"]),
        answer(&["c1*x1/(c2+x1)", "c1*x1+c2*x1*x1", "c1/(c2+x1)"]),
    ]);
    let p = dir.join("langmuir.txt");
    fs::write(&p, t).unwrap();
    p.to_string_lossy().into_owned()
}

fn run_scripted(dir: &Path, runs: &str) -> (Output, std::path::PathBuf) {
    let transcript = langmuir_transcript(dir);
    let out = dir.join("nested/out");
    let o = llmsr(&[
        "run",
        "--dataset",
        "langmuir",
        "--iterations",
        "3",
        "--runs",
        runs,
        "--transcript",
        &transcript,
        "--out",
        out.to_str().unwrap(),
    ]);
    (o, out)
}

#[test]
fn five_scripted_runs_write_five_logs() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_scripted(dir.path(), "5");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for r in 1..=5 {
        let log = RunLog::read(&out.join(format!("run{r}.jsonl"))).unwrap();
        assert_eq!(log.iterations.len(), 3);
        assert_eq!(log.rediscovery_iteration(), Some(2));
        assert!(out.join(format!("run{r}_store.csv")).exists());
    }
    assert!(out.join("config.toml").exists());
    let score = fs::read_to_string(out.join("score.csv")).unwrap();
    assert_eq!(score, "iteration,count\n1,0\n2,5\n3,5\n");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("target found in 5/5 runs"), "{stdout}");
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_scripted(dir.path(), "1");
    assert!(o.status.success());
    let again = dir.path().join("again");
    let o = llmsr(&[
        "run",
        "--config",
        out.join("config.toml").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = RunLog::read(&out.join("run1.jsonl")).unwrap();
    let b = RunLog::read(&again.join("run1.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_api_key_fails_before_any_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "[backend]\nkind = \"http\"\nkey_env = \"LLMSR_SURELY_UNSET_KEY\"\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = llmsr(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("LLMSR_SURELY_UNSET_KEY"));
    assert!(!out.join("run1.jsonl").exists());
}

#[test]
fn exhausted_transcript_keeps_partial_logs_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = langmuir_transcript(dir.path());
    let out = dir.path().join("o");
    let o = llmsr(&[
        "run", "--dataset", "langmuir", "--iterations", "6", "--runs", "1",
        "--transcript", &transcript, "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let log = RunLog::read(&out.join("run1.jsonl")).unwrap();
    assert!(!log.summary.completed);
    assert_eq!(log.iterations.len(), 4);
}

#[test]
fn replay_accepts_fresh_logs_and_flags_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_scripted(dir.path(), "2");
    assert!(o.status.success());
    let l1 = out.join("run1.jsonl");
    let o = llmsr(&["replay", l1.to_str().unwrap(), out.join("run2.jsonl").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));

    let text = fs::read_to_string(&l1).unwrap();
    let tampered = text.replacen("\"equation\":\"c1*x1\"", "\"equation\":\"c1*x1*x1*x1\"", 1);
    assert_ne!(text, tampered);
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, tampered).unwrap();
    let o = llmsr(&["replay", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("divergence"));

    let o = llmsr(&["replay"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn score_and_pareto_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_scripted(dir.path(), "2");
    assert!(o.status.success());
    let logs = [out.join("run1.jsonl"), out.join("run2.jsonl")];
    let logs: Vec<&str> = logs.iter().map(|p| p.to_str().unwrap()).collect();

    let csv = dir.path().join("score.csv");
    let mut args = vec!["score", "--target", "langmuir", "--out", csv.to_str().unwrap()];
    args.extend(&logs);
    let o = llmsr(&args);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap(), "iteration,count\n1,0\n2,2\n3,2\n");
    assert!(String::from_utf8_lossy(&o.stdout).contains("2/2"));

    let fronts = dir.path().join("fronts");
    let mut args = vec!["pareto", "--out", fronts.to_str().unwrap()];
    args.extend(&logs);
    assert!(llmsr(&args).status.success());
    let merged = fs::read_to_string(fronts.join("front_merged.csv")).unwrap();
    assert!(merged.starts_with("complexity,mse,equation\n"));
    // identical runs: the merged front is each run's front
    assert_eq!(merged, fs::read_to_string(fronts.join("front_run1.csv")).unwrap());
}

#[test]
fn datasets_listing_and_reference_table() {
    let o = llmsr(&["datasets"]);
    assert!(o.status.success());
    let s = String::from_utf8_lossy(&o.stdout);
    for id in ["hubble", "kepler", "bode", "langmuir", "dual_site_langmuir", "nikuradse"] {
        assert!(s.contains(id));
    }
    let o = llmsr(&["datasets", "--reference", "nikuradse"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.00392"));
    let o = llmsr(&["datasets", "--reference", "atlantis"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_flag_is_a_usage_error() {
    assert_eq!(llmsr(&["run", "--operators", "medium"]).status.code(), Some(1));
    assert_eq!(llmsr(&["run", "--iterations", "0", "--transcript", "x"]).status.code(), Some(1));
}
