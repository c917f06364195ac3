//! Prompt construction and answer extraction.
//!
//! Prompt text lives in `templates/` as plain files with `{name}`
//! placeholders (`{{` and `}}` produce literal braces). Optional sections
//! (context, data, scratchpad, extra instructions) are rendered from their
//! own templates and dropped entirely when disabled.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::expr::{Dialect, OperatorSet};

/// Bumped whenever a template's wording changes; recorded in run logs.
pub const TEMPLATE_VERSION: &str = "1";

pub const BEGIN_MARKER: &str = "BEGIN EXPRESSIONS";
pub const END_MARKER: &str = "END EXPRESSIONS";

const SYSTEM: &str = include_str!("../templates/system.txt");
const INITIAL: &str = include_str!("../templates/initial.txt");
const ITERATION: &str = include_str!("../templates/iteration.txt");
const CONTEXT: &str = include_str!("../templates/context.txt");
const DATA: &str = include_str!("../templates/data.txt");
const SCRATCHPAD: &str = include_str!("../templates/scratchpad.txt");
const SR_NOTE: &str = include_str!("../templates/sr_note.txt");
const FORMAT_INFIX: &str = include_str!("../templates/format_infix.txt");
const FORMAT_LATEX: &str = include_str!("../templates/format_latex.txt");
const REFORMAT: &str = include_str!("../templates/reformat.txt");
const NIKURADSE_P1: &str = include_str!("../templates/nikuradse/p1.txt");
const NIKURADSE_P2: &str = include_str!("../templates/nikuradse/p2.txt");
const NIKURADSE_P3: &str = include_str!("../templates/nikuradse/p3.txt");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("data block requested but the data view has no rows")]
    MissingData,
    #[error("feedback is not a JSON array: {0}")]
    InvalidFeedback(String),
    #[error("subsample of {requested} rows requested from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("template: {0}")]
    Template(String),
}

/// Fills `{name}` placeholders. Unknown names and unbalanced braces are
/// errors so a typo in a template cannot pass silently.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut chars = template.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                out.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                out.push('}');
            }
            '{' => {
                let name: String = chars.by_ref().take_while(|&c| c != '}').collect();
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == name)
                    .ok_or_else(|| PromptError::Template(format!("unknown placeholder {{{name}}}")))?;
                out.push_str(value.1);
            }
            '}' => return Err(PromptError::Template("unmatched `}`".into())),
            c => out.push(c),
        }
    }
    Ok(out)
}

/// Settings shared by the initial and iteration prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub use_scratchpad: bool,
    pub use_context: bool,
    pub include_data: bool,
    /// Expressions requested per completion.
    pub n_expressions: usize,
    /// Operator list shown to the model; normally set from the active
    /// [`OperatorSet`] with [`PromptConfig::with_operators`].
    pub operator_note: String,
    /// Extra paragraphs appended to the requirements.
    pub extra_instructions: Vec<String>,
    /// Decimal places for the rendered data; `None` prints full precision.
    pub rounding_decimals: Option<usize>,
    pub expression_dialect: Dialect,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            use_scratchpad: true,
            use_context: true,
            include_data: true,
            n_expressions: 3,
            operator_note: OperatorSet::easy(&[]).describe(),
            extra_instructions: Vec::new(),
            rounding_decimals: Some(3),
            expression_dialect: Dialect::Infix,
        }
    }
}

impl PromptConfig {
    pub fn with_operators(mut self, ops: &OperatorSet) -> PromptConfig {
        self.operator_note = ops.describe();
        self
    }
}

/// Prompt variants used on the pipe-friction data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Encourage longer expressions.
    P1,
    /// Encourage longer expressions, phrased differently.
    P2,
    /// Challenge with a reference error; the reference model is not shown.
    P3,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Variant::P1),
            "p2" => Ok(Variant::P2),
            "p3" => Ok(Variant::P3),
            other => Err(format!("unknown prompt variant `{other}` (p1, p2, p3)")),
        }
    }
}

/// The extra instruction for a variant. `reference` is the (MAE,
/// complexity) pair quoted by [`Variant::P3`].
pub fn variant_instruction(v: Variant, reference: (&str, &str)) -> String {
    let text = match v {
        Variant::P1 => NIKURADSE_P1.to_string(),
        Variant::P2 => NIKURADSE_P2.to_string(),
        Variant::P3 => fill(
            NIKURADSE_P3,
            &[("mae", reference.0), ("complexity", reference.1)],
        )
        .expect("bundled template"),
    };
    text.trim().to_string()
}

/// How rows are picked for the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subsample {
    pub size: usize,
    pub seed: u64,
    /// Skip this many positions of the seeded permutation first. With the
    /// default 0, a larger `size` yields a superset of a smaller one;
    /// `offset = size` of an earlier view yields a disjoint one.
    #[serde(default)]
    pub offset: usize,
}

/// The part of a dataset shown to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DataView {
    pub variables: Vec<String>,
    pub output: String,
    /// One comma-separated line per shown row.
    pub rows: Vec<String>,
    /// Dataset row indices shown, ascending; `None` means all rows.
    pub indices: Option<Vec<usize>>,
}

impl DataView {
    pub fn header(&self) -> String {
        let mut cols = self.variables.clone();
        cols.push(self.output.clone());
        cols.join(", ")
    }
}

/// Seeded row selection: a prefix (after `offset`) of a fixed permutation.
pub fn subsample_indices(n: usize, spec: &Subsample) -> Result<Vec<usize>, PromptError> {
    if spec.offset + spec.size > n {
        return Err(PromptError::SampleTooLarge {
            requested: spec.offset + spec.size,
            available: n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut picked = perm[spec.offset..spec.offset + spec.size].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

fn format_value(v: f64, rounding: Option<usize>) -> String {
    match rounding {
        Some(r) => format!("{v:.r$}"),
        None => format!("{v}"),
    }
}

/// Renders the rows shown to the model. Rounding affects only these
/// strings; fitting always uses the full dataset.
pub fn make_data_view(
    d: &Dataset,
    rounding: Option<usize>,
    subsample: Option<&Subsample>,
) -> Result<DataView, PromptError> {
    let indices = subsample
        .map(|s| subsample_indices(d.len(), s))
        .transpose()?;
    let render = |i: usize| {
        d.rows()[i]
            .iter()
            .map(|&v| format_value(v, rounding))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let rows = match &indices {
        Some(ix) => ix.iter().map(|&i| render(i)).collect(),
        None => (0..d.len()).map(render).collect(),
    };
    Ok(DataView {
        variables: d.variables.clone(),
        output: d.output.clone(),
        rows,
        indices,
    })
}

/// The fixed system message.
pub fn build_system() -> String {
    SYSTEM.trim().to_string()
}

fn format_block(cfg: &PromptConfig) -> &'static str {
    match cfg.expression_dialect {
        Dialect::Infix => FORMAT_INFIX,
        Dialect::LatexLite => FORMAT_LATEX,
    }
}

fn render(
    template: &str,
    d: &DataView,
    ctx: Option<&str>,
    cfg: &PromptConfig,
    feedback: &str,
) -> Result<String, PromptError> {
    let header = d.header();
    let rows = d.rows.join("\n");
    let n_rows = d.rows.len().to_string();
    let data_block = if cfg.include_data {
        if d.rows.is_empty() {
            return Err(PromptError::MissingData);
        }
        fill(
            DATA,
            &[("n_rows", &n_rows), ("header", &header), ("rows", &rows)],
        )?
    } else {
        String::new()
    };
    let context_block = match ctx {
        Some(c) if cfg.use_context && !c.trim().is_empty() => fill(CONTEXT, &[("context", c.trim())])?,
        _ => String::new(),
    };
    let scratchpad_block = if cfg.use_scratchpad {
        SCRATCHPAD.to_string()
    } else {
        String::new()
    };
    let extra_block: String = cfg
        .extra_instructions
        .iter()
        .map(|s| format!("\n{}\n", s.trim()))
        .collect();
    let n = cfg.n_expressions.to_string();
    let format = fill(format_block(cfg), &[])?;
    let sr_note = fill(SR_NOTE, &[])?;
    let variables = d.variables.join(", ");
    let text = fill(
        template,
        &[
            ("context_block", &context_block),
            ("data_block", &data_block),
            ("scratchpad_block", &scratchpad_block),
            ("extra_block", &extra_block),
            ("format_block", &format),
            ("sr_note", sr_note.trim()),
            ("feedback", feedback),
            ("n_expressions", &n),
            ("operators", &cfg.operator_note),
            ("variables", &variables),
            ("output", &d.output),
        ],
    )?;
    Ok(tidy(&text))
}

/// Collapses runs of blank lines left by empty sections.
fn tidy(text: &str) -> String {
    let mut out = String::new();
    let mut blank = 0;
    for line in text.trim().lines() {
        if line.trim().is_empty() {
            blank += 1;
            if blank > 1 {
                continue;
            }
        } else {
            blank = 0;
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// First prompt of a run: data, context and instructions, no examples.
pub fn build_initial(d: &DataView, ctx: Option<&str>, cfg: &PromptConfig) -> Result<String, PromptError> {
    render(INITIAL, d, ctx, cfg, "")
}

/// Later prompts: the initial content plus the feedback JSON and the
/// equivalence note.
pub fn build_iteration(
    d: &DataView,
    feedback_json: &str,
    ctx: Option<&str>,
    cfg: &PromptConfig,
) -> Result<String, PromptError> {
    match serde_json::from_str::<serde_json::Value>(feedback_json) {
        Ok(serde_json::Value::Array(_)) => {}
        Ok(_) => return Err(PromptError::InvalidFeedback("not an array".into())),
        Err(e) => return Err(PromptError::InvalidFeedback(e.to_string())),
    }
    render(ITERATION, d, ctx, cfg, feedback_json.trim())
}

/// Appended to a prompt whose answer contained no readable expression.
pub fn format_reminder(cfg: &PromptConfig) -> String {
    fill(REFORMAT, &[("n_expressions", &cfg.n_expressions.to_string())])
        .expect("bundled template")
        .trim()
        .to_string()
}

/// Expression lines between the last `BEGIN EXPRESSIONS` / `END
/// EXPRESSIONS` pair. List numbering, bullets and code fences are
/// stripped. Returns an empty list when no complete marker pair exists.
pub fn extract_expressions(response: &str) -> Vec<String> {
    let lines: Vec<&str> = response.lines().collect();
    let is = |l: &str, m: &str| l.trim().trim_matches(|c| c == '*' || c == '#').trim() == m;
    let Some(end) = lines.iter().rposition(|l| is(l, END_MARKER)) else {
        return Vec::new();
    };
    let Some(begin) = lines[..end].iter().rposition(|l| is(l, BEGIN_MARKER)) else {
        return Vec::new();
    };
    lines[begin + 1..end]
        .iter()
        .map(|l| clean_line(l))
        .filter(|l| !l.is_empty())
        .collect()
}

fn clean_line(line: &str) -> String {
    let mut s = line.trim();
    if s.starts_with("```") {
        return String::new();
    }
    // "1." / "2)" numbering
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            s = r.trim_start();
        }
    }
    if let Some(r) = s.strip_prefix("- ").or_else(|| s.strip_prefix("• ")) {
        s = r.trim_start();
    }
    s.trim_matches('`').trim().to_string()
}
