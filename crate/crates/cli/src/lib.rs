//! Command-line front end: run experiments, replay and score logs, export
//! Pareto fronts, inspect bundled datasets.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 backend or
//! runtime failure (including replay divergence).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use llmsr::data;
use llmsr::engine::{
    self, BackendConfig, EngineError, OperatorChoice, OperatorPreset, RunConfig, RunLog, ScoreMode,
};
use llmsr::expr::Expression;
use llmsr::llm::{LlmError, Usage};
use llmsr::pareto::{FeedbackPolicy, Store};

#[derive(Debug, Parser)]
#[command(name = "llmsr", version, about = "LLM-guided symbolic regression experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its logs.
    Run(RunArgs),
    /// Re-execute logged runs from their recorded responses and compare.
    Replay {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Per-iteration rediscovery score over several run logs.
    Score(ScoreArgs),
    /// Per-run and merged Pareto fronts as CSV.
    Pareto {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Directory for the CSV files; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled datasets, or print a reference table.
    Datasets {
        /// Print the reference results table for this dataset.
        #[arg(long)]
        reference: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Ops {
    Easy,
    Hard,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Policy {
    Standard,
    Top5,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Backend {
    Http,
    Scripted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Cumulative,
    FrontPresence,
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bundled dataset id or CSV path.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_enum)]
    pub operators: Option<Ops>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub no_context: bool,
    #[arg(long)]
    pub no_data: bool,
    #[arg(long)]
    pub no_scratchpad: bool,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Transcript file, or directory of run<N>.txt files.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model: Option<String>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Dataset id whose target is scored, or an infix expression. Defaults
    /// to the target recorded in the logs.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value = "cumulative")]
    pub mode: Mode,
    /// Score CSV path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Failure(pub String, pub u8);

/// Maps an error to the documented exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Failure(_, code)) = cause.downcast_ref::<Failure>() {
            return *code;
        }
        if let Some(e) = cause.downcast_ref::<EngineError>() {
            return match e {
                EngineError::Backend(LlmError::MissingKey(_)) => 1,
                EngineError::Backend(_) | EngineError::Io { .. } => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<LlmError>().is_some() {
            return 2;
        }
    }
    1
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Replay { logs } => cmd_replay(&logs, out),
        Command::Score(args) => cmd_score(&args, out),
        Command::Pareto { logs, out: dir } => cmd_pareto(&logs, dir.as_deref(), out),
        Command::Datasets { reference } => cmd_datasets(reference.as_deref(), out),
    }
}

/// Config file (if any) with flag overrides applied.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(d) = &args.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(o) = args.operators {
        cfg.operators = OperatorChoice::Preset(match o {
            Ops::Easy => OperatorPreset::Easy,
            Ops::Hard => OperatorPreset::Hard,
        });
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(n) = args.runs {
        cfg.runs = n;
    }
    if let Some(t) = args.temperature {
        cfg.temperature = t;
    }
    if let Some(p) = args.policy {
        cfg.feedback = match p {
            Policy::Standard => FeedbackPolicy::standard(),
            Policy::Top5 => FeedbackPolicy::top5(),
        };
    }
    if args.no_context {
        cfg.prompt.use_context = false;
    }
    if args.no_data {
        cfg.prompt.include_data = false;
    }
    if args.no_scratchpad {
        cfg.prompt.use_scratchpad = false;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = &args.model {
        cfg.model = m.clone();
    }
    match (args.backend, &args.transcript) {
        (Some(Backend::Http), _) => {
            if !matches!(cfg.backend, BackendConfig::Http { .. }) {
                cfg.backend = BackendConfig::default();
            }
        }
        (Some(Backend::Scripted), None) => match &cfg.backend {
            BackendConfig::Scripted { .. } => {}
            _ => bail!(Failure("--backend scripted needs --transcript".into(), 1)),
        },
        (_, Some(t)) => {
            cfg.backend = BackendConfig::Scripted {
                transcript: t.clone(),
            }
        }
        (None, None) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let resolved = toml::to_string_pretty(&cfg).context("serializing config")?;
    fs::write(args.out.join("config.toml"), resolved)?;

    let results = engine::run(&cfg)?;
    let mut failures = Vec::new();
    let mut logs = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        let log = match res {
            Ok(log) => log,
            Err(f) => {
                failures.push(format!("run {}: {}", r + 1, f.error));
                *f.log
            }
        };
        let path = args.out.join(format!("run{}.jsonl", r + 1));
        log.write(&path)?;
        let store = log.store()?;
        let csv_path = args.out.join(format!("run{}_store.csv", r + 1));
        let f = fs::File::create(&csv_path)?;
        store
            .write_csv(f, &log.header.variables)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        logs.push(log);
    }

    writeln!(out, "{:<6} {:>11} {:>10} {:>11} {:>10}", "run", "rediscovery", "candidates", "tokens", "cost")?;
    let mut total = Usage::default();
    let mut cost = 0.0;
    for (r, log) in logs.iter().enumerate() {
        let u = log.summary.usage;
        total = total + u;
        cost += log.summary.cost.unwrap_or(0.0);
        writeln!(
            out,
            "{:<6} {:>11} {:>10} {:>11} {:>10}",
            r + 1,
            log.rediscovery_iteration()
                .map_or("-".to_string(), |i| i.to_string()),
            log.evaluations(),
            u.prompt_tokens + u.completion_tokens,
            log.summary
                .cost
                .map_or("n/a".to_string(), |c| format!("${c:.4}")),
        )?;
    }
    let found = logs.iter().filter(|l| l.rediscovery_iteration().is_some()).count();
    writeln!(
        out,
        "target found in {found}/{} runs; {} prompt + {} completion tokens, est. ${cost:.4}",
        logs.len(),
        total.prompt_tokens,
        total.completion_tokens
    )?;
    if let Some(t) = &logs.first().and_then(|l| l.header.target.clone()) {
        let target = parse_for(&logs[0], t)?;
        let score = engine::score_runs(&logs, &target, ScoreMode::Cumulative);
        fs::write(args.out.join("score.csv"), score.to_csv())?;
    }
    writeln!(out, "logs written to {}", args.out.display())?;

    if !failures.is_empty() {
        bail!(Failure(failures.join("\n"), 2));
    }
    Ok(())
}

fn read_logs(paths: &[PathBuf]) -> Result<Vec<RunLog>> {
    if paths.is_empty() {
        bail!(Failure("no run logs given".into(), 1));
    }
    paths
        .iter()
        .map(|p| RunLog::read(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn parse_for(log: &RunLog, text: &str) -> Result<Expression> {
    llmsr::expr::parse(text, llmsr::expr::Dialect::Infix, &log.header.variables)
        .with_context(|| format!("parsing target `{text}`"))
}

fn cmd_replay(paths: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let logs = read_logs(paths)?;
    let mut diverged = 0;
    for (path, log) in paths.iter().zip(&logs) {
        let report = engine::replay(log)?;
        if report.is_clean() {
            writeln!(out, "{}: ok", path.display())?;
        } else {
            diverged += 1;
            writeln!(out, "{}: {} divergence(s)", path.display(), report.divergences.len())?;
            for d in &report.divergences {
                writeln!(out, "  {d}")?;
            }
        }
    }
    if diverged > 0 {
        bail!(Failure(format!("{diverged} log(s) diverged on replay"), 2));
    }
    Ok(())
}

fn cmd_score(args: &ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let logs = read_logs(&args.logs)?;
    let first = &logs[0];
    let target = match &args.target {
        Some(t) if data::BUILTIN_IDS.contains(&t.as_str()) => data::load_builtin(t)?
            .target
            .ok_or_else(|| Failure(format!("dataset `{t}` has no target model"), 1))?,
        Some(t) => parse_for(first, t)?,
        None => match &first.header.target {
            Some(t) => parse_for(first, t)?,
            None => bail!(Failure("logs record no target; pass --target".into(), 1)),
        },
    };
    let mode = match args.mode {
        Mode::Cumulative => ScoreMode::Cumulative,
        Mode::FrontPresence => ScoreMode::FrontPresence,
    };
    let score = engine::score_runs(&logs, &target, mode);
    match &args.out {
        Some(p) => fs::write(p, score.to_csv()).with_context(|| format!("writing {}", p.display()))?,
        None => out.write_all(score.to_csv().as_bytes())?,
    }
    writeln!(out, "\niteration  score")?;
    for (i, c) in score.counts.iter().enumerate() {
        writeln!(out, "{:>9}  {c}/{}", i + 1, score.runs)?;
    }
    Ok(())
}

/// Front rows as `complexity,mse,equation` CSV.
pub fn front_csv(store: &Store, names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["complexity", "mse", "equation"])?;
    for c in store.pareto_front() {
        w.write_record([
            c.complexity.to_string(),
            format!("{:e}", c.mse),
            c.expr.render_with(names),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Union of several runs' final stores.
pub fn merged_store(logs: &[RunLog]) -> Result<Store> {
    let mut merged = Store::new();
    for log in logs {
        for c in log.store()?.candidates() {
            merged.insert(c.clone());
        }
    }
    Ok(merged)
}

fn cmd_pareto(paths: &[PathBuf], dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let logs = read_logs(paths)?;
    let names = logs[0].header.variables.clone();
    if logs.iter().any(|l| l.header.variables != names) {
        bail!(Failure("logs come from datasets with different variables".into(), 1));
    }
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let mut emit = |name: String, body: String| -> Result<()> {
        match dir {
            Some(d) => fs::write(d.join(&name), body)?,
            None => write!(out, "# {name}\n{body}\n")?,
        }
        Ok(())
    };
    for (r, log) in logs.iter().enumerate() {
        emit(format!("front_run{}.csv", r + 1), front_csv(&log.store()?, &names)?)?;
    }
    emit("front_merged.csv".into(), front_csv(&merged_store(&logs)?, &names)?)?;
    Ok(())
}

fn cmd_datasets(reference: Option<&str>, out: &mut dyn Write) -> Result<()> {
    if let Some(id) = reference {
        out.write_all(data::render_reference_table(id)?.as_bytes())?;
        return Ok(());
    }
    writeln!(out, "{:<20} {:>5}  {:<30} source", "id", "rows", "target")?;
    for e in data::manifest_entries()? {
        writeln!(
            out,
            "{:<20} {:>5}  {:<30} {}",
            e.id,
            e.rows,
            e.target.as_deref().unwrap_or("-"),
            e.source
        )?;
    }
    Ok(())
}
