//! Candidate store, complexity/error Pareto front, and feedback selection.

use std::collections::HashMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::expr::Expression;
use crate::optimize::FitResult;

/// An evaluated expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub expr: Expression,
    pub canonical: Expression,
    pub params: Vec<f64>,
    /// `+inf` when the expression could not be fitted.
    pub mse: f64,
    pub mae: f64,
    pub complexity: usize,
    pub iteration_born: usize,
}

impl Candidate {
    pub fn new(expr: Expression, fit: Option<&FitResult>, iteration_born: usize) -> Candidate {
        let (params, mse, mae) = match fit {
            Some(f) => (f.params.clone(), f.mse, f.mae),
            None => (
                expr.initial_guess().to_vec(),
                f64::INFINITY,
                f64::INFINITY,
            ),
        };
        Candidate {
            canonical: expr.canonicalize(),
            complexity: expr.complexity(),
            expr,
            params,
            mse,
            mae,
            iteration_born,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mse.is_finite()
    }

    /// True if `self` is at least as good on both axes and strictly better
    /// on one.
    pub fn dominates(&self, other: &Candidate) -> bool {
        self.complexity <= other.complexity
            && self.mse <= other.mse
            && (self.complexity < other.complexity || self.mse < other.mse)
    }
}

/// What [`Store::insert`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inserted {
    New,
    /// Replaced an SR-equivalent incumbent with higher MSE.
    Replaced,
    /// An SR-equivalent incumbent with lower or equal MSE was kept.
    Duplicate,
}

/// Evaluated candidates, at most one per canonical form.
#[derive(Debug, Clone, Default)]
pub struct Store {
    items: Vec<Candidate>,
    by_canonical: HashMap<String, usize>,
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Candidates in insertion order.
    pub fn candidates(&self) -> &[Candidate] {
        &self.items
    }

    /// The stored candidate SR-equivalent to `e`, if any.
    pub fn find_equivalent(&self, e: &Expression) -> Option<&Candidate> {
        self.by_canonical
            .get(&e.canonicalize().render())
            .map(|&i| &self.items[i])
    }

    pub fn insert(&mut self, c: Candidate) -> Inserted {
        let key = c.canonical.render();
        match self.by_canonical.get(&key) {
            Some(&i) => {
                if c.mse < self.items[i].mse {
                    self.items[i] = c;
                    Inserted::Replaced
                } else {
                    Inserted::Duplicate
                }
            }
            None => {
                self.by_canonical.insert(key, self.items.len());
                self.items.push(c);
                Inserted::New
            }
        }
    }

    /// Non-dominated finite-MSE candidates by ascending complexity. Among
    /// candidates tied on (complexity, mse) only the earliest born is kept.
    pub fn pareto_front(&self) -> Vec<&Candidate> {
        let mut finite: Vec<&Candidate> = self.items.iter().filter(|c| c.is_finite()).collect();
        finite.sort_by(|a, b| {
            a.complexity
                .cmp(&b.complexity)
                .then(a.mse.total_cmp(&b.mse))
                .then(a.iteration_born.cmp(&b.iteration_born))
        });
        let mut front = Vec::new();
        let mut best = f64::INFINITY;
        for c in finite {
            if c.mse < best {
                best = c.mse;
                front.push(c);
            }
        }
        front
    }

    /// Candidates to send back to the model, ordered by descending MSE.
    pub fn select_feedback(&self, policy: &FeedbackPolicy) -> Vec<&Candidate> {
        let index_of = |c: &Candidate| self.items.iter().position(|x| std::ptr::eq(x, c)).unwrap();
        let finite: Vec<usize> = (0..self.items.len())
            .filter(|&i| self.items[i].is_finite())
            .collect();
        let by_mse = |ids: &mut Vec<usize>| {
            ids.sort_by(|&a, &b| self.items[a].mse.total_cmp(&self.items[b].mse).then(a.cmp(&b)))
        };

        let mut chosen: Vec<usize> = match *policy {
            FeedbackPolicy::Standard {
                min_count, recent, ..
            } => {
                if finite.len() <= min_count {
                    finite.clone()
                } else {
                    let mut chosen: Vec<usize> =
                        self.pareto_front().into_iter().map(index_of).collect();
                    let mut rest: Vec<usize> =
                        finite.iter().copied().filter(|i| !chosen.contains(i)).collect();
                    by_mse(&mut rest);
                    let fill = min_count.saturating_sub(chosen.len());
                    chosen.extend(rest.drain(..fill.min(rest.len())));
                    // newest first; insertion order breaks ties
                    rest.sort_by(|&a, &b| {
                        self.items[b]
                            .iteration_born
                            .cmp(&self.items[a].iteration_born)
                            .then(b.cmp(&a))
                    });
                    chosen.extend(rest.into_iter().take(recent));
                    chosen
                }
            }
            FeedbackPolicy::TopKByMse { k, .. } => {
                let mut ids = finite.clone();
                by_mse(&mut ids);
                ids.truncate(k);
                ids
            }
        };
        chosen.sort_by(|&a, &b| {
            self.items[b]
                .mse
                .total_cmp(&self.items[a].mse)
                .then(self.items[b].complexity.cmp(&self.items[a].complexity))
                .then(a.cmp(&b))
        });
        chosen.into_iter().map(|i| &self.items[i]).collect()
    }

    /// Writes `equation,complexity,mse,mae,iteration` rows for every candidate.
    pub fn write_csv<W: io::Write>(&self, out: W, names: &[String]) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["equation", "complexity", "mse", "mae", "iteration"])?;
        for c in &self.items {
            w.write_record([
                c.expr.render_with(names),
                c.complexity.to_string(),
                c.mse.to_string(),
                c.mae.to_string(),
                c.iteration_born.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which stored candidates are serialized into the iteration prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeedbackPolicy {
    /// The whole front, padded with the best other candidates up to
    /// `min_count`, plus up to `recent` of the newest remaining ones.
    Standard {
        #[serde(default = "default_min_count")]
        min_count: usize,
        #[serde(default = "default_recent")]
        recent: usize,
        #[serde(default)]
        include_params: bool,
    },
    /// The `k` lowest-MSE candidates.
    TopKByMse {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        include_params: bool,
    },
}

fn default_min_count() -> usize {
    6
}
fn default_recent() -> usize {
    2
}
fn default_k() -> usize {
    5
}

impl Default for FeedbackPolicy {
    fn default() -> Self {
        FeedbackPolicy::standard()
    }
}

impl FeedbackPolicy {
    pub fn standard() -> FeedbackPolicy {
        FeedbackPolicy::Standard {
            min_count: 6,
            recent: 2,
            include_params: false,
        }
    }

    pub fn top5() -> FeedbackPolicy {
        FeedbackPolicy::TopKByMse {
            k: 5,
            include_params: false,
        }
    }

    pub fn include_params(&self) -> bool {
        match *self {
            FeedbackPolicy::Standard { include_params, .. }
            | FeedbackPolicy::TopKByMse { include_params, .. } => include_params,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            FeedbackPolicy::Standard { min_count: 0, .. } => Err("min_count must be at least 1".into()),
            FeedbackPolicy::TopKByMse { k: 0, .. } => Err("k must be at least 1".into()),
            _ => Ok(()),
        }
    }
}

/// One entry of the feedback JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub equation: String,
    pub complexity: usize,
    pub mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
}

/// Rounds to six significant digits.
pub fn round6(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.5e}").parse().unwrap()
}

/// JSON array of `{equation, complexity, mse[, params]}` records, variables
/// rendered as `x1..xn`.
pub fn to_feedback_json(cands: &[&Candidate], include_params: bool) -> String {
    to_feedback_json_with(cands, include_params, None)
}

/// Like [`to_feedback_json`], with caller-supplied variable names.
pub fn to_feedback_json_with(
    cands: &[&Candidate],
    include_params: bool,
    names: Option<&[String]>,
) -> String {
    let records: Vec<FeedbackRecord> = cands
        .iter()
        .map(|c| FeedbackRecord {
            equation: match names {
                Some(n) => c.expr.render_with(n),
                None => c.expr.render(),
            },
            complexity: c.complexity,
            mse: round6(c.mse),
            params: include_params.then(|| c.params.iter().map(|&v| round6(v)).collect()),
        })
        .collect();
    serde_json::to_string(&records).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Dialect};

    fn cand(src: &str, mse: f64, born: usize) -> Candidate {
        let e = parse(src, Dialect::Infix, &["x1".to_string()]).unwrap();
        let mut c = Candidate::new(e, None, born);
        c.mse = mse;
        c.mae = mse.sqrt();
        c
    }

    fn with_complexity(mut c: Candidate, cx: usize) -> Candidate {
        c.complexity = cx;
        c
    }

    #[test]
    fn insert_dedups_by_canonical_form() {
        let mut s = Store::new();
        assert_eq!(s.insert(cand("x1+c1", 1.0, 1)), Inserted::New);
        assert_eq!(s.len(), 1);
        assert_eq!(s.insert(cand("x1-c1", 2.0, 2)), Inserted::Duplicate);
        assert_eq!(s.len(), 1);
        assert_eq!(s.candidates()[0].mse, 1.0);
        assert_eq!(s.insert(cand("c2+x1", 0.5, 3)), Inserted::Replaced);
        assert_eq!(s.len(), 1);
        assert_eq!(s.candidates()[0].mse, 0.5);
    }

    #[test]
    fn front_drops_dominated() {
        let mut s = Store::new();
        s.insert(with_complexity(cand("c1*x1", 1.0, 1), 5));
        s.insert(with_complexity(cand("c1*x1*x1", 0.5, 1), 7));
        s.insert(with_complexity(cand("c1*x1*x1*x1", 2.0, 1), 9));
        let front: Vec<f64> = s.pareto_front().iter().map(|c| c.mse).collect();
        assert_eq!(front, vec![1.0, 0.5]);
    }

    #[test]
    fn front_tie_keeps_earliest() {
        let mut s = Store::new();
        s.insert(with_complexity(cand("c1*x1", 1.0, 4), 3));
        s.insert(with_complexity(cand("x1", 1.0, 2), 3));
        let front = s.pareto_front();
        assert_eq!(front.len(), 1);
        assert_eq!(front[0].iteration_born, 2);
    }

    #[test]
    fn infinite_mse_never_selected() {
        let mut s = Store::new();
        s.insert(cand("x1", f64::INFINITY, 1));
        s.insert(cand("c1*x1", 1.0, 1));
        assert_eq!(s.pareto_front().len(), 1);
        assert_eq!(s.select_feedback(&FeedbackPolicy::standard()).len(), 1);
        assert_eq!(s.select_feedback(&FeedbackPolicy::top5()).len(), 1);
    }

    #[test]
    fn standard_returns_all_when_small() {
        let mut s = Store::new();
        for (i, src) in ["x1", "c1*x1", "x1+c1", "x1*x1"].iter().enumerate() {
            s.insert(cand(src, i as f64 + 1.0, 1));
        }
        let out = s.select_feedback(&FeedbackPolicy::standard());
        assert_eq!(out.len(), 4);
        assert!(out[0].mse >= out[3].mse);
    }

    #[test]
    fn top_k_lowest_mse() {
        let mut s = Store::new();
        for i in 0..12 {
            let src = format!("x1^{}", i + 2);
            s.insert(cand(&src, (i * 7 % 12) as f64, i));
        }
        let out = s.select_feedback(&FeedbackPolicy::top5());
        let mses: Vec<f64> = out.iter().map(|c| c.mse).collect();
        assert_eq!(mses, vec![4.0, 3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn feedback_json_schema() {
        let c = cand("c1*x1", 0.123456789, 1);
        assert_eq!(
            to_feedback_json(&[&c], false),
            r#"[{"equation":"c1*x1","complexity":3,"mse":0.123457}]"#
        );
        assert!(to_feedback_json(&[&c], true).contains(r#""params":[1.0]"#));
        assert_eq!(to_feedback_json(&[], false), "[]");
    }

    #[test]
    fn rounding_is_six_significant_digits() {
        assert_eq!(round6(4.718281828), 4.71828);
        assert_eq!(round6(123456789.0), 123457000.0);
        assert_eq!(round6(-0.000012345678), -0.0000123457);
    }

    #[test]
    fn policy_config_round_trip() {
        let p: FeedbackPolicy = toml::from_str("kind = \"top_k_by_mse\"\ninclude_params = true").unwrap();
        assert_eq!(
            p,
            FeedbackPolicy::TopKByMse {
                k: 5,
                include_params: true
            }
        );
        let p: FeedbackPolicy = toml::from_str("kind = \"standard\"").unwrap();
        assert_eq!(p, FeedbackPolicy::standard());
    }
}
