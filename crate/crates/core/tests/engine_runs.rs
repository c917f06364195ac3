use std::fs;

use llmsr::engine::{
    self, compare_logs, first_rediscovery, replay, score_runs, BackendConfig, Outcome, RunConfig,
    RunLog, ScoreMode, Session,
};
use llmsr::llm::{join_transcript, ScriptedBackend};
use llmsr::pareto::FeedbackPolicy;
use llmsr::prompts::{Subsample, Variant};

fn answer(exprs: &[&str]) -> String {
    format!("Scratchpad: fine.\nBEGIN EXPRESSIONS\n{}\nEND EXPRESSIONS", exprs.join("\n"))
}

fn cfg(dataset: &str, iterations: usize) -> RunConfig {
    RunConfig {
        dataset: dataset.into(),
        iterations,
        runs: 1,
        backend: BackendConfig::Scripted {
            transcript: "unused".into(),
        },
        ..RunConfig::default()
    }
}

fn polys(n: usize) -> Vec<String> {
    (1..=n)
        .map(|k| answer(&[&format!("c1*x1^{k}"), &format!("c1+c2*x1^{}", k + 1), "c1/(c2+x1)"]))
        .collect()
}

#[test]
fn fifteen_iterations_fifteen_records() {
    let s = Session::new(&cfg("langmuir", 15)).unwrap();
    let b = ScriptedBackend::new(polys(15));
    let log = s.run(0, &b).unwrap();
    assert_eq!(log.iterations.len(), 15);
    assert!(log.iterations.iter().all(|i| i.exchanges.len() == 1));
    assert_eq!(b.used(), 15);
    // iteration prompts carry the feedback block; the first does not
    assert!(!log.iterations[0].exchanges[0].prompt.contains("\"equation\""));
    assert!(log.iterations[1].exchanges[0].prompt.contains("\"equation\""));
}

#[test]
fn usage_totals_match_iterations() {
    let s = Session::new(&cfg("hubble", 4)).unwrap();
    let log = s.run(0, &ScriptedBackend::new(polys(4))).unwrap();
    let prompt: u64 = log.iterations.iter().map(|i| i.usage.prompt_tokens).sum();
    let completion: u64 = log.iterations.iter().map(|i| i.usage.completion_tokens).sum();
    assert_eq!(log.summary.usage.prompt_tokens, prompt);
    assert_eq!(log.summary.usage.completion_tokens, completion);
    assert!(prompt > 0 && log.summary.cost.unwrap() > 0.0);
}

#[test]
fn jsonl_round_trip_and_replay() {
    let s = Session::new(&cfg("bode", 3)).unwrap();
    let log = s.run(2, &ScriptedBackend::new(polys(3))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.jsonl");
    log.write(&p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 3 + 2);
    assert!(text.lines().next().unwrap().contains("\"template_version\""));
    let back = RunLog::read(&p).unwrap();
    assert_eq!(back, log);
    assert!(replay(&back).unwrap().is_clean());
}

#[test]
fn replay_flags_changed_metrics() {
    let s = Session::new(&cfg("langmuir", 2)).unwrap();
    let log = s.run(0, &ScriptedBackend::new(polys(2))).unwrap();
    let mut bad = log.clone();
    bad.summary.store[0].mse = bad.summary.store[0].mse.map(|m| m * (1.0 + 1e-7));
    assert!(!replay(&bad).unwrap().is_clean());
    let mut bad = log.clone();
    if let Outcome::Fitted { complexity, .. } = &mut bad.iterations[0].expressions[0].outcome {
        *complexity += 1;
    }
    assert!(!compare_logs(&bad, &log).is_clean());
}

#[test]
fn run_seeds_differ_and_are_recorded() {
    let s = Session::new(&cfg("langmuir", 1)).unwrap();
    let a = s.run(0, &ScriptedBackend::new(polys(1))).unwrap();
    let b = s.run(1, &ScriptedBackend::new(polys(1))).unwrap();
    assert_ne!(a.header.fit.seed, b.header.fit.seed);
    assert_eq!(a.header.run_index, 0);
}

#[test]
fn parallel_runs_match_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    fs::write(&t, join_transcript(&polys(3))).unwrap();
    let mut c = cfg("langmuir", 3);
    c.runs = 3;
    c.backend = BackendConfig::Scripted { transcript: t };
    let logs: Vec<RunLog> = engine::run(&c).unwrap().into_iter().map(Result::unwrap).collect();
    let s = Session::new(&c).unwrap();
    for (r, log) in logs.iter().enumerate() {
        let seq = s.run(r, &ScriptedBackend::new(polys(3))).unwrap();
        assert_eq!(&seq, log);
    }
}

#[test]
fn transcript_directory_gives_one_file_per_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run1.txt"), join_transcript(&[answer(&["c1*x1"])])).unwrap();
    fs::write(dir.path().join("run2.txt"), join_transcript(&[answer(&["c1*x1/(c2+x1)"])])).unwrap();
    let mut c = cfg("langmuir", 1);
    c.runs = 2;
    c.backend = BackendConfig::Scripted {
        transcript: dir.path().to_path_buf(),
    };
    let logs: Vec<RunLog> = engine::run(&c).unwrap().into_iter().map(Result::unwrap).collect();
    assert_eq!(logs[0].rediscovery_iteration(), None);
    assert_eq!(logs[1].rediscovery_iteration(), Some(1));
}

#[test]
fn missing_transcript_is_a_preflight_error() {
    let mut c = cfg("langmuir", 1);
    c.backend = BackendConfig::Scripted {
        transcript: "/definitely/not/here.txt".into(),
    };
    assert!(engine::run(&c).is_err());
}

#[test]
fn unknown_dataset_is_a_preflight_error() {
    assert!(Session::new(&cfg("atlantis", 1)).is_err());
}

#[test]
fn scores_from_logs() {
    let s = Session::new(&cfg("langmuir", 4)).unwrap();
    let found_at = |k: usize| {
        let mut r = polys(4);
        r[k - 1] = answer(&["c1*x1/(c2+x1)"]);
        s.run(0, &ScriptedBackend::new(r)).unwrap()
    };
    let never = s.run(0, &ScriptedBackend::new(polys(4))).unwrap();
    let logs = vec![found_at(1), found_at(1), found_at(3), never.clone(), never];
    let target = s.target.clone().unwrap();
    assert_eq!(first_rediscovery(&logs[2], &target), Some(3));
    let score = score_runs(&logs, &target, ScoreMode::Cumulative);
    assert_eq!(score.counts, vec![2, 2, 3, 3]);
    assert!(score.counts.windows(2).all(|w| w[0] <= w[1]));
    assert!(score.counts.iter().all(|&c| c <= 5));

    // the true model is the best fit, so once present it stays on the front
    let front = score_runs(&logs, &target, ScoreMode::FrontPresence);
    assert_eq!(front.counts, vec![2, 2, 3, 3]);
    assert_eq!(score.to_csv().lines().next(), Some("iteration,count"));
}

#[test]
fn top5_policy_and_params_reach_the_prompt() {
    let mut c = cfg("langmuir", 2);
    c.feedback = FeedbackPolicy::TopKByMse {
        k: 5,
        include_params: true,
    };
    let s = Session::new(&c).unwrap();
    let log = s.run(0, &ScriptedBackend::new(polys(2))).unwrap();
    assert!(log.iterations[1].exchanges[0].prompt.contains("\"params\""));
}

#[test]
fn subsampled_view_and_variant_text() {
    let mut c = cfg("nikuradse", 1);
    c.subsample = Some(Subsample {
        size: 36,
        seed: 9,
        offset: 0,
    });
    c.prompt_variant = Some(Variant::P3);
    let s = Session::new(&c).unwrap();
    assert_eq!(s.view.rows.len(), 36);
    let log = s
        .run(0, &ScriptedBackend::new(vec![answer(&["c1+c2/(x1*x2)"])]))
        .unwrap();
    let prompt = &log.iterations[0].exchanges[0].prompt;
    assert!(prompt.contains("Data (36 rows)"));
    assert!(prompt.contains("0.00392"));
    // fitting still sees every row
    let Outcome::Fitted { mse, params, .. } = &log.iterations[0].expressions[0].outcome else {
        panic!()
    };
    let d = &s.dataset;
    let e = d.parse("c1+c2/(x1*x2)").unwrap();
    let full: f64 = (0..d.len())
        .map(|i| (e.evaluate(params, d.x(i)).unwrap().unwrap() - d.y(i)).powi(2))
        .sum::<f64>()
        / d.len() as f64;
    assert!((full - mse).abs() <= 1e-12 * full);
}

#[test]
fn config_toml_round_trip() {
    let c = RunConfig::default();
    let text = toml::to_string_pretty(&c).unwrap();
    let back: RunConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, c);
}

