//! The search loop: prompt, complete, extract, parse, fit, store, feed back.
//!
//! Every run produces a [`RunLog`], persisted as JSON lines: a header with
//! the resolved configuration, one record per iteration (prompts, raw
//! responses, per-expression outcomes, token usage) and a summary with the
//! final store. A log is sufficient to replay the run without the model.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, DataError, Dataset};
use crate::expr::{parse, Expression, Operator, OperatorSet};
use crate::llm::{
    self, ChatBackend, ChatRequest, HttpBackend, LlmError, PriceTable, ScriptedBackend, Usage,
};
use crate::optimize::{self, derived_seed, FitConfig, FitError};
use crate::pareto::{self, Candidate, FeedbackPolicy, Inserted, Store};
use crate::prompts::{self, PromptConfig, PromptError, Subsample, Variant};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend failure: {0}")]
    Backend(#[from] LlmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run log {path}: {message}")]
    Log { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Named operator regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorPreset {
    /// `+ - * /` plus the dataset's additions.
    Easy,
    /// The easy set plus `sqrt log exp square cube`.
    Hard,
}

/// Either a preset name or an explicit operator list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorChoice {
    Preset(OperatorPreset),
    Custom(Vec<Operator>),
}

impl OperatorChoice {
    pub fn resolve(&self, d: &Dataset) -> Result<OperatorSet, EngineError> {
        Ok(match self {
            OperatorChoice::Preset(OperatorPreset::Easy) => d.easy_operators(),
            OperatorChoice::Preset(OperatorPreset::Hard) => d.hard_operators(),
            OperatorChoice::Custom(ops) => OperatorSet::custom("custom", ops)
                .map_err(|e| EngineError::Config(e.to_string()))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// OpenAI-compatible chat-completions endpoint.
    Http {
        #[serde(default = "default_endpoint")]
        endpoint: String,
        /// Environment variable holding the API key.
        #[serde(default = "default_key_env")]
        key_env: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_retries")]
        max_retries: u32,
    },
    /// Canned responses. `transcript` is one file shared by every run, or
    /// a directory holding `run1.txt`, `run2.txt`, ...
    Scripted { transcript: PathBuf },
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".into()
}
fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    3
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Http {
            endpoint: default_endpoint(),
            key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
        }
    }
}

/// Everything that defines an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled dataset id or path to a CSV file.
    pub dataset: String,
    /// Infix target overriding the dataset's own, for rediscovery checks.
    pub target: Option<String>,
    pub operators: OperatorChoice,
    pub prompt: PromptConfig,
    /// Adds the matching extra instruction to the prompt.
    pub prompt_variant: Option<Variant>,
    /// Rows shown in the prompt; all rows when absent.
    pub subsample: Option<Subsample>,
    pub feedback: FeedbackPolicy,
    pub fit: FitConfig,
    /// Completions per run, the initial prompt included.
    pub iterations: usize,
    pub runs: usize,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub backend: BackendConfig,
    /// Master seed; run `r` fits with `derived_seed(seed, r)`.
    pub seed: u64,
    pub prices: PriceTable,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "langmuir".into(),
            target: None,
            operators: OperatorChoice::Preset(OperatorPreset::Easy),
            prompt: PromptConfig::default(),
            prompt_variant: None,
            subsample: None,
            feedback: FeedbackPolicy::default(),
            fit: FitConfig::default(),
            iterations: 15,
            runs: 5,
            model: "gpt-4o".into(),
            temperature: llm::DEFAULT_TEMPERATURE,
            max_tokens: None,
            backend: BackendConfig::default(),
            seed: 0,
            prices: llm::default_prices(),
        }
    }
}

impl RunConfig {
    /// Pre-flight checks that need no dataset or network.
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.prompt.n_expressions == 0 {
            return bad("n_expressions must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.model.trim().is_empty() {
            return bad("model must be set".into());
        }
        self.fit.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.feedback.validate().map_err(EngineError::Config)?;
        Ok(())
    }
}

/// Loads a bundled dataset by id, or a CSV file by path.
pub fn resolve_dataset(spec: &str) -> Result<Dataset, EngineError> {
    if data::BUILTIN_IDS.contains(&spec) {
        return Ok(data::load_builtin(spec)?);
    }
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "csv") || path.is_file() {
        return Ok(data::load_csv(path, &data::CsvOptions::default())?);
    }
    Err(DataError::UnknownDataset(spec.to_string()).into())
}

/// The target used for rediscovery checks, if any.
pub fn resolve_target(cfg: &RunConfig, d: &Dataset) -> Result<Option<Expression>, EngineError> {
    match &cfg.target {
        Some(t) => d
            .parse(t)
            .map(Some)
            .map_err(|e| EngineError::Config(format!("target `{t}`: {e}"))),
        None => Ok(d.target.clone()),
    }
}

/// True when the candidate is the target up to constant placement.
/// Structural only: `c1*x1^c2` does not match `c1*x1^1.5`.
pub fn check_rediscovery(c: &Candidate, target: &Expression) -> bool {
    c.canonical == target.canonicalize()
}

// ---------------------------------------------------------------- run log

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_index: usize,
    pub config: RunConfig,
    /// Fit settings actually used, seed included.
    pub fit: FitConfig,
    pub dataset_id: String,
    pub variables: Vec<String>,
    pub output: String,
    pub operators: String,
    pub target: Option<String>,
    pub template_version: String,
    pub system_prompt: String,
}

/// One prompt and the answer to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub response: llm::ChatResponse,
}

/// What happened to one extracted expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Fitted and offered to the store.
    Fitted {
        equation: String,
        complexity: usize,
        params: Vec<f64>,
        mse: f64,
        mae: f64,
        stored: bool,
    },
    /// Valid but no parameters gave a finite loss; stored with infinite MSE.
    Unfittable { equation: String, complexity: usize },
    /// SR-equivalent to an already stored candidate; not refitted.
    Duplicate { equation: String, of: String },
    ParseError { message: String },
    /// Parsed but outside the operator set, missing a variable, or with
    /// too many constants.
    Rejected { equation: String, message: String },
    /// Beyond the requested number of expressions; ignored.
    Surplus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionRecord {
    pub text: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// The completion, plus the format-reminder retry when one was needed.
    pub exchanges: Vec<Exchange>,
    pub expressions: Vec<ExpressionRecord>,
    pub usage: Usage,
}

/// Stored candidate as persisted; `None` metrics mean infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub equation: String,
    pub complexity: usize,
    pub params: Vec<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub completed: bool,
    pub error: Option<String>,
    pub rediscovery_iteration: Option<usize>,
    pub usage: Usage,
    /// Dollars, when the model has a price entry.
    pub cost: Option<f64>,
    pub store: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Header(Box<RunHeader>),
    Iteration(IterationRecord),
    Summary(RunSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub iterations: Vec<IterationRecord>,
    pub summary: RunSummary,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl RunLog {
    pub fn rediscovery_iteration(&self) -> Option<usize> {
        self.summary.rediscovery_iteration
    }

    /// Every raw response, in request order.
    pub fn responses(&self) -> Vec<String> {
        self.iterations
            .iter()
            .flat_map(|it| it.exchanges.iter().map(|e| e.response.text.clone()))
            .collect()
    }

    /// Number of expressions that were fitted (or found unfittable).
    pub fn evaluations(&self) -> usize {
        self.iterations
            .iter()
            .flat_map(|it| &it.expressions)
            .filter(|e| matches!(e.outcome, Outcome::Fitted { .. } | Outcome::Unfittable { .. }))
            .count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &LogLine| {
            out.push_str(&serde_json::to_string(line).expect("log serializes"));
            out.push('\n');
        };
        push(&LogLine::Header(Box::new(self.header.clone())));
        for it in &self.iterations {
            push(&LogLine::Iteration(it.clone()));
        }
        push(&LogLine::Summary(self.summary.clone()));
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), EngineError> {
        let mut f = fs::File::create(path).map_err(io_err(path))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<RunLog, EngineError> {
        let f = fs::File::open(path).map_err(io_err(path))?;
        let log_err = |message: String| EngineError::Log {
            path: path.to_path_buf(),
            message,
        };
        let mut header = None;
        let mut iterations = Vec::new();
        let mut summary = None;
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| log_err(format!("line {}: {e}", n + 1)))?;
            match parsed {
                LogLine::Header(h) => header = Some(*h),
                LogLine::Iteration(it) => iterations.push(it),
                LogLine::Summary(s) => summary = Some(s),
            }
        }
        Ok(RunLog {
            header: header.ok_or_else(|| log_err("missing header line".into()))?,
            iterations,
            summary: summary.ok_or_else(|| log_err("missing summary line".into()))?,
        })
    }

    /// Rebuilds the final store from the persisted snapshot.
    pub fn store(&self) -> Result<Store, EngineError> {
        let mut s = Store::new();
        for r in &self.summary.store {
            let e = parse(&r.equation, crate::expr::Dialect::Infix, &self.header.variables)
                .map_err(|e| EngineError::Log {
                    path: PathBuf::new(),
                    message: format!("stored equation `{}`: {e}", r.equation),
                })?;
            let mut c = Candidate::new(e, None, r.iteration);
            c.params = r.params.clone();
            c.mse = r.mse.unwrap_or(f64::INFINITY);
            c.mae = r.mae.unwrap_or(f64::INFINITY);
            s.insert(c);
        }
        Ok(s)
    }
}

/// A run that stopped on a backend error; the partial log is kept.
#[derive(Debug)]
pub struct RunFailure {
    pub log: Box<RunLog>,
    pub error: EngineError,
}

// ---------------------------------------------------------------- the loop

/// A fully prepared run: dataset, operators, prompt settings and target.
pub struct Session {
    pub cfg: RunConfig,
    pub dataset: Dataset,
    pub operators: OperatorSet,
    pub prompt: PromptConfig,
    pub view: prompts::DataView,
    pub target: Option<Expression>,
}

impl Session {
    pub fn new(cfg: &RunConfig) -> Result<Session, EngineError> {
        cfg.validate()?;
        let dataset = resolve_dataset(&cfg.dataset)?;
        Session::with_dataset(cfg, dataset)
    }

    pub fn with_dataset(cfg: &RunConfig, dataset: Dataset) -> Result<Session, EngineError> {
        cfg.validate()?;
        let operators = cfg.operators.resolve(&dataset)?;
        let mut prompt = cfg.prompt.clone().with_operators(&operators);
        if let Some(v) = cfg.prompt_variant {
            let refs = data::references(&dataset.id).unwrap_or_default();
            let reference = refs
                .iter()
                .find(|r| r.label == "BMS")
                .map(|r| (r.mae.as_str(), r.complexity.as_str()))
                .unwrap_or(("unknown", "unknown"));
            prompt
                .extra_instructions
                .push(prompts::variant_instruction(v, reference));
        }
        let view = prompts::make_data_view(&dataset, prompt.rounding_decimals, cfg.subsample.as_ref())?;
        let target = resolve_target(cfg, &dataset)?;
        Ok(Session {
            cfg: cfg.clone(),
            dataset,
            operators,
            prompt,
            view,
            target,
        })
    }

    /// Fit settings for run `r`.
    pub fn fit_config(&self, run_index: usize) -> FitConfig {
        FitConfig {
            seed: derived_seed(self.cfg.seed, run_index),
            ..self.cfg.fit.clone()
        }
    }

    fn header(&self, run_index: usize, fit: &FitConfig) -> RunHeader {
        RunHeader {
            run_index,
            config: self.cfg.clone(),
            fit: fit.clone(),
            dataset_id: self.dataset.id.clone(),
            variables: self.dataset.variables.clone(),
            output: self.dataset.output.clone(),
            operators: self.operators.describe(),
            target: self.target.as_ref().map(|t| t.render_with(&self.dataset.variables)),
            template_version: prompts::TEMPLATE_VERSION.into(),
            system_prompt: prompts::build_system(),
        }
    }

    /// One run of `cfg.iterations` completions against `backend`.
    pub fn run(&self, run_index: usize, backend: &dyn ChatBackend) -> Result<RunLog, RunFailure> {
        let fit = self.fit_config(run_index);
        self.run_with_fit(run_index, fit, backend)
    }

    fn run_with_fit(
        &self,
        run_index: usize,
        fit: FitConfig,
        backend: &dyn ChatBackend,
    ) -> Result<RunLog, RunFailure> {
        let header = self.header(run_index, &fit);
        let system = header.system_prompt.clone();
        let mut state = RunState {
            store: Store::new(),
            iterations: Vec::new(),
            usage: Usage::default(),
            rediscovery: None,
        };
        for iteration in 1..=self.cfg.iterations {
            if let Err(error) = self.step(iteration, &system, &fit, backend, &mut state) {
                let log = self.finish(header, state, Some(&error));
                return Err(RunFailure { log: Box::new(log), error });
            }
        }
        Ok(self.finish(header, state, None))
    }

    fn request(&self, system: &str, user: String) -> ChatRequest {
        ChatRequest {
            system: system.to_string(),
            user,
            temperature: self.cfg.temperature,
            model: self.cfg.model.clone(),
            max_tokens: self.cfg.max_tokens,
        }
    }

    fn step(
        &self,
        iteration: usize,
        system: &str,
        fit: &FitConfig,
        backend: &dyn ChatBackend,
        state: &mut RunState,
    ) -> Result<(), EngineError> {
        let ctx = self.dataset.context.as_deref();
        let user = if iteration == 1 {
            prompts::build_initial(&self.view, ctx, &self.prompt)?
        } else {
            let fb = state.store.select_feedback(&self.cfg.feedback);
            let json = pareto::to_feedback_json_with(
                &fb,
                self.cfg.feedback.include_params(),
                Some(&self.dataset.variables),
            );
            prompts::build_iteration(&self.view, &json, ctx, &self.prompt)?
        };

        let mut record = IterationRecord {
            iteration,
            exchanges: Vec::new(),
            expressions: Vec::new(),
            usage: Usage::default(),
        };
        let ask = |prompt: String, record: &mut IterationRecord| -> Result<Vec<String>, EngineError> {
            let response = backend.complete(&self.request(system, prompt.clone()))?;
            record.usage.add(&response);
            let lines = prompts::extract_expressions(&response.text);
            record.exchanges.push(Exchange { prompt, response });
            Ok(lines)
        };
        let outcome = ask(user.clone(), &mut record).and_then(|lines| {
            if lines.is_empty() {
                tracing::info!(iteration, "no expressions found; re-prompting once");
                let retry = format!("{user}\n{}\n", prompts::format_reminder(&self.prompt));
                ask(retry, &mut record)
            } else {
                Ok(lines)
            }
        });
        let lines = match outcome {
            Ok(lines) => lines,
            Err(e) => {
                state.usage = state.usage + record.usage;
                state.iterations.push(record);
                return Err(e);
            }
        };

        for (k, text) in lines.into_iter().enumerate() {
            let outcome = if k >= self.prompt.n_expressions {
                Outcome::Surplus
            } else {
                self.evaluate(&text, iteration, fit, state)
            };
            record.expressions.push(ExpressionRecord { text, outcome });
        }
        state.usage = state.usage + record.usage;
        state.iterations.push(record);
        Ok(())
    }

    fn evaluate(&self, text: &str, iteration: usize, fit: &FitConfig, state: &mut RunState) -> Outcome {
        let d = &self.dataset;
        let e = match parse(text, self.prompt.expression_dialect, &d.variables) {
            Ok(e) => e,
            Err(err) => {
                return Outcome::ParseError {
                    message: err.to_string(),
                }
            }
        };
        let equation = e.render_with(&d.variables);
        let rejected = |message: String| Outcome::Rejected {
            equation: equation.clone(),
            message,
        };
        if let Err(err) = e.validate(&self.operators) {
            return rejected(err.to_string());
        }
        if let Err(err) = e.check_uses_all(d.n_vars()) {
            return rejected(err.to_string());
        }
        if let Some(prev) = state.store.find_equivalent(&e) {
            return Outcome::Duplicate {
                equation,
                of: prev.expr.render_with(&d.variables),
            };
        }
        let result = optimize::repeat_fit(&e, d, fit);
        let (candidate, outcome) = match result {
            Ok(r) => {
                let c = Candidate::new(e, Some(&r), iteration);
                (
                    c,
                    Outcome::Fitted {
                        equation: equation.clone(),
                        complexity: 0,
                        params: r.params.clone(),
                        mse: r.mse,
                        mae: r.mae,
                        stored: true,
                    },
                )
            }
            Err(FitError::NoFiniteObjective) => {
                let c = Candidate::new(e, None, iteration);
                (
                    c,
                    Outcome::Unfittable {
                        equation: equation.clone(),
                        complexity: 0,
                    },
                )
            }
            Err(err) => return rejected(err.to_string()),
        };
        let complexity = candidate.complexity;
        let found = self
            .target
            .as_ref()
            .is_some_and(|t| check_rediscovery(&candidate, t));
        let inserted = state.store.insert(candidate);
        if found && state.rediscovery.is_none() {
            state.rediscovery = Some(iteration);
        }
        match outcome {
            Outcome::Fitted {
                equation,
                params,
                mse,
                mae,
                ..
            } => Outcome::Fitted {
                equation,
                complexity,
                params,
                mse,
                mae,
                stored: inserted != Inserted::Duplicate,
            },
            Outcome::Unfittable { equation, .. } => Outcome::Unfittable {
                equation,
                complexity,
            },
            other => other,
        }
    }

    fn finish(&self, header: RunHeader, state: RunState, error: Option<&EngineError>) -> RunLog {
        let names = &self.dataset.variables;
        let store = state
            .store
            .candidates()
            .iter()
            .map(|c| CandidateRecord {
                equation: c.expr.render_with(names),
                complexity: c.complexity,
                params: c.params.clone(),
                mse: finite(c.mse),
                mae: finite(c.mae),
                iteration: c.iteration_born,
            })
            .collect();
        let cost = llm::estimate_cost(&state.usage, &self.cfg.model, &self.cfg.prices).ok();
        RunLog {
            header,
            iterations: state.iterations,
            summary: RunSummary {
                completed: error.is_none(),
                error: error.map(|e| e.to_string()),
                rediscovery_iteration: state.rediscovery,
                usage: state.usage,
                cost,
                store,
            },
        }
    }
}

struct RunState {
    store: Store,
    iterations: Vec<IterationRecord>,
    usage: Usage,
    rediscovery: Option<usize>,
}

/// Builds the backend for run `run_index` (0-based).
pub fn make_backend(cfg: &BackendConfig, run_index: usize) -> Result<Arc<dyn ChatBackend>, EngineError> {
    match cfg {
        BackendConfig::Http {
            endpoint,
            key_env,
            timeout_secs,
            max_retries,
        } => {
            let b = HttpBackend::new(endpoint, key_env, Duration::from_secs(*timeout_secs), *max_retries)?;
            b.check_key()?;
            Ok(Arc::new(b))
        }
        BackendConfig::Scripted { transcript } => {
            let path = if transcript.is_dir() {
                transcript.join(format!("run{}.txt", run_index + 1))
            } else {
                transcript.clone()
            };
            Ok(Arc::new(ScriptedBackend::from_file(&path)?))
        }
    }
}

/// Executes all `cfg.runs` runs concurrently. Pre-flight problems (bad
/// config, unknown dataset, missing key or transcript) fail the whole call;
/// backend failures during a run are reported per run.
pub fn run(cfg: &RunConfig) -> Result<Vec<Result<RunLog, RunFailure>>, EngineError> {
    let session = Session::new(cfg)?;
    let backends: Vec<Arc<dyn ChatBackend>> = match &cfg.backend {
        // one shared client for all runs
        BackendConfig::Http { .. } => {
            let b = make_backend(&cfg.backend, 0)?;
            vec![b; cfg.runs]
        }
        BackendConfig::Scripted { .. } => (0..cfg.runs)
            .map(|r| make_backend(&cfg.backend, r))
            .collect::<Result<_, _>>()?,
    };
    Ok(backends
        .par_iter()
        .enumerate()
        .map(|(r, b)| session.run(r, b.as_ref()))
        .collect())
}

// ---------------------------------------------------------------- replay

/// Differences between a log and its re-execution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub divergences: Vec<String>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

const REPLAY_TOLERANCE: f64 = 1e-9;

/// Re-runs a logged run against its own recorded responses and compares
/// every metric.
pub fn replay(log: &RunLog) -> Result<ReplayReport, EngineError> {
    let session = Session::new(&log.header.config)?;
    let backend = ScriptedBackend::new(log.responses());
    let fresh = match session.run_with_fit(log.header.run_index, log.header.fit.clone(), &backend) {
        Ok(l) => l,
        Err(f) => *f.log,
    };
    Ok(compare_logs(log, &fresh))
}

pub fn compare_logs(old: &RunLog, new: &RunLog) -> ReplayReport {
    let mut report = ReplayReport::default();
    let mut diverge = |m: String| report.divergences.push(m);
    if old.iterations.len() != new.iterations.len() {
        diverge(format!(
            "iteration count {} vs {}",
            old.iterations.len(),
            new.iterations.len()
        ));
    }
    for (a, b) in old.iterations.iter().zip(&new.iterations) {
        let it = a.iteration;
        if a.exchanges.len() != b.exchanges.len() {
            diverge(format!("iteration {it}: exchange count differs"));
        }
        for (x, y) in a.exchanges.iter().zip(&b.exchanges) {
            if x.prompt != y.prompt {
                diverge(format!("iteration {it}: prompt text differs"));
            }
        }
        if a.expressions.len() != b.expressions.len() {
            diverge(format!("iteration {it}: expression count differs"));
        }
        for (k, (x, y)) in a.expressions.iter().zip(&b.expressions).enumerate() {
            compare_outcomes(it, k, &x.outcome, &y.outcome, &mut diverge);
        }
    }
    if old.summary.store.len() != new.summary.store.len() {
        diverge(format!(
            "store size {} vs {}",
            old.summary.store.len(),
            new.summary.store.len()
        ));
    }
    for (x, y) in old.summary.store.iter().zip(&new.summary.store) {
        let same_metric = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => close(a, b, REPLAY_TOLERANCE),
            (None, None) => true,
            _ => false,
        };
        if x.equation != y.equation
            || x.complexity != y.complexity
            || !same_metric(x.mse, y.mse)
            || !same_metric(x.mae, y.mae)
        {
            diverge(format!(
                "store entry `{}` (mse {:?}) vs `{}` (mse {:?})",
                x.equation, x.mse, y.equation, y.mse
            ));
        }
    }
    if old.summary.rediscovery_iteration != new.summary.rediscovery_iteration {
        diverge(format!(
            "rediscovery iteration {:?} vs {:?}",
            old.summary.rediscovery_iteration, new.summary.rediscovery_iteration
        ));
    }
    report
}

fn compare_outcomes(it: usize, k: usize, a: &Outcome, b: &Outcome, diverge: &mut impl FnMut(String)) {
    let at = format!("iteration {it}, expression {}", k + 1);
    match (a, b) {
        (
            Outcome::Fitted {
                equation: e1,
                complexity: c1,
                mse: m1,
                mae: a1,
                params: p1,
                ..
            },
            Outcome::Fitted {
                equation: e2,
                complexity: c2,
                mse: m2,
                mae: a2,
                params: p2,
                ..
            },
        ) => {
            if e1 != e2 {
                diverge(format!("{at}: equation `{e1}` vs `{e2}`"));
            }
            if c1 != c2 {
                diverge(format!("{at}: complexity {c1} vs {c2}"));
            }
            if !close(*m1, *m2, REPLAY_TOLERANCE) {
                diverge(format!("{at}: mse {m1} vs {m2}"));
            }
            if !close(*a1, *a2, REPLAY_TOLERANCE) {
                diverge(format!("{at}: mae {a1} vs {a2}"));
            }
            if p1.len() != p2.len() || p1.iter().zip(p2).any(|(x, y)| !close(*x, *y, REPLAY_TOLERANCE)) {
                diverge(format!("{at}: params differ"));
            }
        }
        (a, b) if a == b => {}
        (a, b) => diverge(format!("{at}: {a:?} vs {b:?}")),
    }
}

// ---------------------------------------------------------------- scoring

/// How a run counts towards the score at iteration `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Target found at or before iteration `i`.
    #[default]
    Cumulative,
    /// Target on the Pareto front of the store as it stood after iteration `i`.
    FrontPresence,
}

/// `counts[i]` is the number of runs credited at iteration `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Score {
    pub runs: usize,
    pub counts: Vec<usize>,
}

impl Score {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{c}\n", i + 1));
        }
        out
    }
}

/// Candidates of a log, rebuilt iteration by iteration with their logged
/// metrics (no refitting).
fn logged_candidates(log: &RunLog) -> Vec<(usize, Candidate)> {
    let vars = &log.header.variables;
    let mut out = Vec::new();
    for it in &log.iterations {
        for rec in &it.expressions {
            let (equation, mse, mae, params) = match &rec.outcome {
                Outcome::Fitted {
                    equation,
                    mse,
                    mae,
                    params,
                    ..
                } => (equation, *mse, *mae, params.clone()),
                Outcome::Unfittable { equation, .. } => {
                    (equation, f64::INFINITY, f64::INFINITY, Vec::new())
                }
                _ => continue,
            };
            let Ok(e) = parse(equation, crate::expr::Dialect::Infix, vars) else {
                continue;
            };
            let mut c = Candidate::new(e, None, it.iteration);
            c.mse = mse;
            c.mae = mae;
            if !params.is_empty() {
                c.params = params;
            }
            out.push((it.iteration, c));
        }
    }
    out
}

/// First iteration at which `target` appears in the log's candidates.
pub fn first_rediscovery(log: &RunLog, target: &Expression) -> Option<usize> {
    logged_candidates(log)
        .into_iter()
        .find(|(_, c)| check_rediscovery(c, target))
        .map(|(i, _)| i)
}

/// Per-iteration score over several runs. The length is the longest run's
/// iteration count.
pub fn score_runs(logs: &[RunLog], target: &Expression, mode: ScoreMode) -> Score {
    let n = logs
        .iter()
        .map(|l| l.header.config.iterations.max(l.iterations.len()))
        .max()
        .unwrap_or(0);
    let mut counts = vec![0; n];
    for log in logs {
        match mode {
            ScoreMode::Cumulative => {
                if let Some(found) = first_rediscovery(log, target) {
                    for c in counts.iter_mut().skip(found - 1) {
                        *c += 1;
                    }
                }
            }
            ScoreMode::FrontPresence => {
                let cands = logged_candidates(log);
                let canon = target.canonicalize();
                let mut store = Store::new();
                let mut next = 0;
                for (i, count) in counts.iter_mut().enumerate() {
                    while next < cands.len() && cands[next].0 <= i + 1 {
                        store.insert(cands[next].1.clone());
                        next += 1;
                    }
                    if store.pareto_front().iter().any(|c| c.canonical == canon) {
                        *count += 1;
                    }
                }
            }
        }
    }
    Score {
        runs: logs.len(),
        counts,
    }
}

/// Scores from rediscovery iterations alone (`None` = never found).
pub fn score_from_iterations(found: &[Option<usize>], iterations: usize) -> Score {
    let counts = (1..=iterations)
        .map(|i| found.iter().filter(|f| f.is_some_and(|f| f <= i)).count())
        .collect();
    Score {
        runs: found.len(),
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted_cfg(iterations: usize) -> RunConfig {
        RunConfig {
            iterations,
            runs: 1,
            fit: FitConfig {
                hops: 5,
                ..FitConfig::default()
            },
            backend: BackendConfig::Scripted {
                transcript: PathBuf::from("unused"),
            },
            ..RunConfig::default()
        }
    }

    fn answer(exprs: &[&str]) -> String {
        format!(
            "Scratchpad: looks saturating.\nBEGIN EXPRESSIONS\n{}\nEND EXPRESSIONS",
            exprs.join("\n")
        )
    }

    #[test]
    fn rediscovery_in_first_iteration() {
        let s = Session::new(&scripted_cfg(2)).unwrap();
        let b = ScriptedBackend::new(vec![
            answer(&["c1*x1", "x1*c3/(x1+c4)", "c1+x1"]),
            answer(&["c1*x1*x1", "c1*x1/(c2+x1)", "c1-x1"]),
        ]);
        let log = s.run(0, &b).unwrap();
        assert_eq!(log.rediscovery_iteration(), Some(1));
        assert_eq!(log.iterations.len(), 2);
        // the repeat of the target is recognized, not refitted
        assert!(matches!(
            log.iterations[1].expressions[1].outcome,
            Outcome::Duplicate { .. }
        ));
    }

    #[test]
    fn malformed_expression_is_skipped() {
        let s = Session::new(&scripted_cfg(1)).unwrap();
        let b = ScriptedBackend::new(vec![answer(&["c1*x1", "c1*(x1", "c1+c2*x1"])]);
        let log = s.run(0, &b).unwrap();
        assert_eq!(log.summary.store.len(), 2);
        assert!(matches!(
            log.iterations[0].expressions[1].outcome,
            Outcome::ParseError { .. }
        ));
    }

    #[test]
    fn empty_answer_gets_one_retry() {
        let s = Session::new(&scripted_cfg(2)).unwrap();
        let b = ScriptedBackend::new(vec![
            "I am not sure.".into(),
            answer(&["c1*x1"]),
            "still nothing".into(),
            "nothing again".into(),
        ]);
        let log = s.run(0, &b).unwrap();
        assert_eq!(log.iterations[0].exchanges.len(), 2);
        assert!(log.iterations[0].exchanges[1].prompt.contains("Reminder"));
        assert_eq!(log.iterations[1].exchanges.len(), 2);
        assert!(log.iterations[1].expressions.is_empty());
        assert_eq!(log.iterations.len(), 2);
    }

    #[test]
    fn backend_failure_keeps_partial_log() {
        let s = Session::new(&scripted_cfg(3)).unwrap();
        let b = ScriptedBackend::new(vec![answer(&["c1*x1"])]);
        let f = s.run(0, &b).unwrap_err();
        assert!(matches!(f.error, EngineError::Backend(LlmError::TranscriptExhausted { .. })));
        assert!(!f.log.summary.completed);
        assert_eq!(f.log.summary.store.len(), 1);
        assert_eq!(f.log.iterations.len(), 2);
    }

    #[test]
    fn operator_and_variable_rules_enforced() {
        let s = Session::new(&scripted_cfg(1)).unwrap();
        let b = ScriptedBackend::new(vec![answer(&["exp(c1*x1)", "c1", "y = c1*x1"])]);
        let log = s.run(0, &b).unwrap();
        let o: Vec<&Outcome> = log.iterations[0].expressions.iter().map(|e| &e.outcome).collect();
        assert!(matches!(o[0], Outcome::Rejected { .. }));
        assert!(matches!(o[1], Outcome::Rejected { .. }));
        assert!(matches!(o[2], Outcome::Fitted { .. }));
    }

    #[test]
    fn free_exponent_is_not_kepler() {
        let d = data::load_builtin("kepler").unwrap();
        let t = d.target.clone().unwrap();
        let free = Candidate::new(d.parse("c1*x1^c2").unwrap(), None, 1);
        let fixed = Candidate::new(d.parse("x1*sqrt(x1)*c4").unwrap(), None, 1);
        assert!(!check_rediscovery(&free, &t));
        assert!(check_rediscovery(&fixed, &t));
        assert!(check_rediscovery(&Candidate::new(t.clone(), None, 1), &t));
    }

    #[test]
    fn counting_score() {
        let s = score_from_iterations(&[Some(1), Some(1), Some(3), None, None], 5);
        assert_eq!(s.counts, vec![2, 2, 3, 3, 3]);
        let s = score_from_iterations(&[None, None], 4);
        assert_eq!(s.counts, vec![0; 4]);
    }

    #[test]
    fn config_checks() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.iterations = 0;
        assert!(c.validate().is_err());
        let c = RunConfig {
            temperature: 3.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn operator_choice_parses_presets_and_lists() {
        #[derive(Deserialize)]
        struct W {
            o: OperatorChoice,
        }
        let w: W = toml::from_str("o = \"hard\"").unwrap();
        assert_eq!(w.o, OperatorChoice::Preset(OperatorPreset::Hard));
        let w: W = toml::from_str("o = [\"+\", \"*\", \"sqrt\"]").unwrap();
        assert!(matches!(w.o, OperatorChoice::Custom(ref v) if v.len() == 3));
    }
}
