//! Benchmark datasets and user CSV loading.
//!
//! Six tables ship inside the crate together with a manifest recording the
//! source, row count and SHA-256 of each file. Every bundled load re-checks
//! the checksum, so a bundled dataset is byte-identical on every platform.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::expr::{parse, Dialect, Expression, Operator, OperatorSet};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("unknown dataset `{0}` (bundled: {list})", list = BUILTIN_IDS.join(", "))]
    UnknownDataset(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    MalformedCsv(String),
    #[error("non-numeric cell `{value}` in row {row}, column `{column}`")]
    NonNumericCell {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite value in row {0}")]
    NonFinite(usize),
    #[error("row {row} has {got} cells, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("bundled dataset `{0}` failed its checksum")]
    Checksum(String),
    #[error("bundle manifest: {0}")]
    Manifest(String),
}

/// A table of observations: `n` input columns followed by one output.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    /// Input column names; bundled sets use `x1..xn`.
    pub variables: Vec<String>,
    /// Name of the dependent column.
    pub output: String,
    rows: Vec<Vec<f64>>,
    pub context: Option<String>,
    pub target: Option<Expression>,
    pub easy_extra_ops: Vec<Operator>,
}

impl Dataset {
    /// Builds a dataset, checking that every row has `variables.len() + 1`
    /// finite cells.
    pub fn new(
        id: &str,
        variables: Vec<String>,
        output: &str,
        rows: Vec<Vec<f64>>,
    ) -> Result<Dataset, DataError> {
        let width = variables.len() + 1;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(DataError::Ragged {
                    row: i + 1,
                    expected: width,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite(i + 1));
            }
        }
        Ok(Dataset {
            id: id.to_string(),
            variables,
            output: output.to_string(),
            rows,
            context: None,
            target: None,
            easy_extra_ops: Vec::new(),
        })
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Full rows, inputs then output.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.rows[i][..self.n_vars()]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.rows[i][self.n_vars()]
    }

    /// `+ - * /` plus this dataset's additions.
    pub fn easy_operators(&self) -> OperatorSet {
        OperatorSet::easy(&self.easy_extra_ops)
    }

    pub fn hard_operators(&self) -> OperatorSet {
        OperatorSet::hard(&self.easy_extra_ops)
    }

    /// Parses an infix expression over this dataset's variables.
    pub fn parse(&self, text: &str) -> Result<Expression, crate::expr::ExprError> {
        parse(text, Dialect::Infix, &self.variables)
    }
}

/// Ids of the bundled datasets.
pub const BUILTIN_IDS: [&str; 6] = [
    "hubble",
    "kepler",
    "bode",
    "langmuir",
    "dual_site_langmuir",
    "nikuradse",
];

const MANIFEST: &str = include_str!("../data/manifest.toml");

fn bundled_file(name: &str) -> Option<&'static str> {
    Some(match name {
        "hubble.csv" => include_str!("../data/hubble.csv"),
        "hubble.context.txt" => include_str!("../data/hubble.context.txt"),
        "kepler.csv" => include_str!("../data/kepler.csv"),
        "kepler.context.txt" => include_str!("../data/kepler.context.txt"),
        "bode.csv" => include_str!("../data/bode.csv"),
        "bode.context.txt" => include_str!("../data/bode.context.txt"),
        "langmuir.csv" => include_str!("../data/langmuir.csv"),
        "langmuir.context.txt" => include_str!("../data/langmuir.context.txt"),
        "dual_site_langmuir.csv" => include_str!("../data/dual_site_langmuir.csv"),
        "dual_site_langmuir.context.txt" => {
            include_str!("../data/dual_site_langmuir.context.txt")
        }
        "nikuradse.csv" => include_str!("../data/nikuradse.csv"),
        "nikuradse.context.txt" => include_str!("../data/nikuradse.context.txt"),
        _ => return None,
    })
}

/// One bundled dataset as described in the manifest.
#[derive(Debug, Clone, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub source: String,
    /// `transcribed` or `synthetic`.
    pub provenance: String,
    pub rows: usize,
    pub sha256: String,
    pub target: Option<String>,
    #[serde(default)]
    pub easy_extra_ops: Vec<Operator>,
}

/// A published comparison number, kept as display strings.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Reference {
    pub dataset: String,
    pub label: String,
    pub mae: String,
    pub complexity: String,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    dataset: Vec<ManifestEntry>,
    #[serde(default)]
    reference: Vec<Reference>,
}

fn manifest() -> Result<Manifest, DataError> {
    toml::from_str(MANIFEST).map_err(|e| DataError::Manifest(e.to_string()))
}

/// Manifest entries for all bundled datasets.
pub fn manifest_entries() -> Result<Vec<ManifestEntry>, DataError> {
    Ok(manifest()?.dataset)
}

/// Loads a bundled dataset by id, verifying its checksum.
pub fn load_builtin(id: &str) -> Result<Dataset, DataError> {
    let entry = manifest()?
        .dataset
        .into_iter()
        .find(|e| e.id == id)
        .ok_or_else(|| DataError::UnknownDataset(id.to_string()))?;
    let text = bundled_file(&entry.file)
        .ok_or_else(|| DataError::Manifest(format!("missing bundled file {}", entry.file)))?;
    if hex::encode(Sha256::digest(text.as_bytes())) != entry.sha256 {
        return Err(DataError::Checksum(id.to_string()));
    }
    let mut d = read_csv(id, text.as_bytes())?;
    if d.len() != entry.rows {
        return Err(DataError::Manifest(format!(
            "{id}: manifest says {} rows, file has {}",
            entry.rows,
            d.len()
        )));
    }
    let stem = entry.file.trim_end_matches(".csv");
    d.context = bundled_file(&format!("{stem}.context.txt")).map(|s| s.trim().to_string());
    d.target = match &entry.target {
        Some(t) => Some(
            d.parse(t)
                .map_err(|e| DataError::Manifest(format!("{id} target: {e}")))?,
        ),
        None => None,
    };
    d.easy_extra_ops = entry.easy_extra_ops;
    Ok(d)
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Dataset id; defaults to the file stem.
    pub id: Option<String>,
    /// Operators added to the easy set.
    pub easy_extra_ops: Vec<Operator>,
}

/// Loads a CSV with a header row; the last column is the output.
///
/// A sidecar `<stem>.context.txt` next to the file becomes the context.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let id = options.id.clone().unwrap_or_else(|| stem.clone());
    let mut d = read_csv(&id, &bytes)?;
    let sidecar = path.with_file_name(format!("{stem}.context.txt"));
    if sidecar.is_file() {
        let text = std::fs::read_to_string(&sidecar).map_err(|source| DataError::Io {
            path: sidecar.clone(),
            source,
        })?;
        let text = text.trim();
        if !text.is_empty() {
            d.context = Some(text.to_string());
        }
    }
    d.easy_extra_ops = options.easy_extra_ops.clone();
    Ok(d)
}

fn read_csv(id: &str, bytes: &[u8]) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::MalformedCsv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 || header.iter().any(String::is_empty) {
        return Err(DataError::MalformedCsv(
            "header must name at least one input and the output column".into(),
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::MalformedCsv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                row: i + 1,
                expected: header.len(),
                got: record.len(),
            });
        }
        let row = record
            .iter()
            .zip(&header)
            .map(|(cell, column)| {
                cell.parse::<f64>().map_err(|_| DataError::NonNumericCell {
                    row: i + 1,
                    column: column.clone(),
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::MalformedCsv("no data rows".into()));
    }
    let mut variables = header;
    let output = variables.pop().unwrap();
    Dataset::new(id, variables, &output, rows)
}

/// Published comparison numbers for a bundled dataset, in manifest order.
pub fn references(id: &str) -> Result<Vec<Reference>, DataError> {
    if !BUILTIN_IDS.contains(&id) {
        return Err(DataError::UnknownDataset(id.to_string()));
    }
    Ok(manifest()?
        .reference
        .into_iter()
        .filter(|r| r.dataset == id)
        .collect())
}

/// Plain-text table of [`references`], values printed exactly as stored.
pub fn render_reference_table(id: &str) -> Result<String, DataError> {
    let refs = references(id)?;
    let w = refs
        .iter()
        .map(|r| r.label.len())
        .chain(["method".len()])
        .max()
        .unwrap();
    let mut out = String::new();
    let _ = writeln!(out, "{:<w$}  {:<10}  complexity", "method", "MAE");
    for r in &refs {
        let _ = writeln!(out, "{:<w$}  {:<10}  {}", r.label, r.mae, r.complexity);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundle_loads() {
        for id in BUILTIN_IDS {
            let d = load_builtin(id).unwrap();
            assert_eq!(d.id, id);
            assert!(!d.is_empty());
            assert!(d.context.is_some(), "{id} has no context");
        }
    }

    #[test]
    fn bundle_facts() {
        let kepler = load_builtin("kepler").unwrap();
        assert!(kepler.context.as_deref().unwrap().contains("semi-major axis"));
        assert!(load_builtin("nikuradse").unwrap().len() > 350);
        let hubble = load_builtin("hubble").unwrap();
        assert_eq!(hubble.target, Some(hubble.parse("c1*x1").unwrap()));
        assert!(load_builtin("nikuradse").unwrap().target.is_none());
        assert_eq!(load_builtin("nikuradse").unwrap().n_vars(), 2);
    }

    #[test]
    fn targets_fit_easy_operator_sets() {
        for id in BUILTIN_IDS {
            let d = load_builtin(id).unwrap();
            if let Some(t) = &d.target {
                t.validate(&d.easy_operators()).unwrap();
                t.check_uses_all(d.n_vars()).unwrap();
            }
        }
    }

    #[test]
    fn unknown_id() {
        assert!(matches!(
            load_builtin("pendulum"),
            Err(DataError::UnknownDataset(_))
        ));
    }

    #[test]
    fn ragged_and_non_finite_rows_rejected() {
        let v = vec!["x1".to_string()];
        assert!(matches!(
            Dataset::new("t", v.clone(), "y", vec![vec![1.0]]),
            Err(DataError::Ragged { .. })
        ));
        assert!(matches!(
            Dataset::new("t", v, "y", vec![vec![1.0, f64::NAN]]),
            Err(DataError::NonFinite(1))
        ));
    }

    #[test]
    fn reference_table_is_verbatim() {
        let t = render_reference_table("nikuradse").unwrap();
        assert!(t.contains("0.02270419"));
        assert!(t.lines().any(|l| l.starts_with("BMS") && l.ends_with("37")));
    }
}
