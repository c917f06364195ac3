//! Expression trees proposed by the language model.
//!
//! An [`Expression`] is an immutable tree over indexed constants `c1..cK`,
//! dataset variables `x1..xn`, a small set of unary functions and the five
//! binary operators. Constants carry no value in the tree; their values are
//! supplied at evaluation time (see [`crate::optimize`]).

mod canon;
mod eval;
mod ops;
mod parse;
mod render;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use eval::Compiled;
pub use ops::{Operator, OperatorSet};
pub use parse::{parse, Dialect};

/// Errors raised while building, validating or evaluating expressions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("implicit form: {0}")]
    ImplicitForm(String),
    #[error("expected {expected} parameters, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("operator `{0}` is not in the active operator set")]
    DisallowedOperator(String),
    #[error("variable x{index} is not bound (dataset has {available} variables)")]
    UnboundVariable { index: usize, available: usize },
    #[error("expression does not use every variable (missing {0})")]
    MissingVariables(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Sqrt,
    Log,
    Exp,
    Square,
    Cube,
    Neg,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Log => "log",
            UnaryOp::Exp => "exp",
            UnaryOp::Square => "square",
            UnaryOp::Cube => "cube",
            UnaryOp::Neg => "neg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// A node of an expression tree. Indices of constants and variables are
/// 1-based, matching the `c1`, `x1` surface names.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(usize),
    Var(usize),
    /// Fixed numeric exponent. Only produced as the right operand of `pow`
    /// (e.g. the `3/2` in `x1^(3/2)`), so that fixed and free exponents stay
    /// distinguishable.
    Num(f64),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    pub fn unary(op: UnaryOp, child: Node) -> Node {
        Node::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Node, right: Node) -> Node {
        Node::Binary(op, Box::new(left), Box::new(right))
    }

    fn size(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var(_) | Node::Num(_) => 1,
            Node::Unary(_, c) => 1 + c.size(),
            Node::Binary(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        match self {
            Node::Unary(_, c) => c.visit(f),
            Node::Binary(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            _ => {}
        }
    }

    fn has_var(&self) -> bool {
        let mut found = false;
        self.visit(&mut |n| found |= matches!(n, Node::Var(_)));
        found
    }

    fn has_const(&self) -> bool {
        let mut found = false;
        self.visit(&mut |n| found |= matches!(n, Node::Const(_)));
        found
    }
}

/// An immutable expression with contiguously indexed constants.
///
/// Equality is structural on the tree; initial guesses are ignored.
#[derive(Debug, Clone)]
pub struct Expression {
    root: Node,
    guesses: Vec<f64>,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Expression {
    /// Builds an expression, re-indexing constants left to right as `c1..cK`.
    /// Every constant starts with an initial guess of 1.0.
    pub fn new(root: Node) -> Expression {
        Expression::with_guesses(root, &[])
    }

    /// Like [`Expression::new`], with initial guesses keyed by the constant
    /// indices used in `root` (`guesses[i - 1]` for `Const(i)`). Missing
    /// entries default to 1.0.
    pub fn with_guesses(mut root: Node, guesses: &[f64]) -> Expression {
        let mut order: Vec<usize> = Vec::new();
        reindex(&mut root, &mut order);
        let guesses = order
            .iter()
            .map(|&old| guesses.get(old - 1).copied().unwrap_or(1.0))
            .collect();
        Expression { root, guesses }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Number of distinct constants `K`.
    pub fn n_constants(&self) -> usize {
        self.guesses.len()
    }

    /// Starting point for constant fitting: 1.0, or the literal value for
    /// constants that were written as numbers.
    pub fn initial_guess(&self) -> &[f64] {
        &self.guesses
    }

    /// Distinct variable indices referenced by the tree.
    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.root.visit(&mut |n| {
            if let Node::Var(i) = n {
                out.insert(*i);
            }
        });
        out
    }

    /// Total node count; every constant, variable, literal exponent and
    /// operator counts one.
    pub fn complexity(&self) -> usize {
        self.root.size()
    }

    /// Infix rendering with variables named `x1..xn`.
    pub fn render(&self) -> String {
        render::render(&self.root, None)
    }

    /// Infix rendering with caller-supplied variable names.
    pub fn render_with(&self, names: &[String]) -> String {
        render::render(&self.root, Some(names))
    }

    /// Evaluates the tree at one input row. `None` signals an undefined
    /// value (division by zero, log of a non-positive value, negative square
    /// root, non-finite intermediate).
    pub fn evaluate(&self, params: &[f64], x: &[f64]) -> Result<Option<f64>, ExprError> {
        if params.len() != self.n_constants() {
            return Err(ExprError::ArityMismatch {
                expected: self.n_constants(),
                got: params.len(),
            });
        }
        self.check_bound(x.len())?;
        Ok(eval::eval_node(&self.root, params, x))
    }

    /// Flattens the tree into a stack program for repeated evaluation.
    pub fn compile(&self) -> Compiled {
        Compiled::new(&self.root, self.n_constants())
    }

    /// Rewrites the expression into its constant-absorbing canonical form.
    pub fn canonicalize(&self) -> Expression {
        Expression::new(canon::canonicalize(&self.root))
    }

    /// True when both expressions share a canonical form, i.e. they become
    /// the same model once their constants are fitted.
    pub fn sr_equivalent(&self, other: &Expression) -> bool {
        self.canonicalize() == other.canonicalize()
    }

    /// Errors if the tree references a variable beyond `n_vars`.
    pub fn check_bound(&self, n_vars: usize) -> Result<(), ExprError> {
        match self.variables().into_iter().find(|&i| i == 0 || i > n_vars) {
            Some(index) => Err(ExprError::UnboundVariable {
                index,
                available: n_vars,
            }),
            None => Ok(()),
        }
    }

    /// Errors unless every variable `x1..x{n_vars}` appears in the tree.
    pub fn check_uses_all(&self, n_vars: usize) -> Result<(), ExprError> {
        let used = self.variables();
        let missing: Vec<String> = (1..=n_vars)
            .filter(|i| !used.contains(i))
            .map(|i| format!("x{i}"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ExprError::MissingVariables(missing.join(", ")))
        }
    }

    /// Checks every operator against `ops`.
    pub fn validate(&self, ops: &OperatorSet) -> Result<(), ExprError> {
        ops.validate(&self.root)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn reindex(node: &mut Node, order: &mut Vec<usize>) {
    match node {
        Node::Const(i) => {
            let pos = match order.iter().position(|o| o == i) {
                Some(p) => p,
                None => {
                    order.push(*i);
                    order.len() - 1
                }
            };
            *i = pos + 1;
        }
        Node::Unary(_, c) => reindex(c, order),
        Node::Binary(_, l, r) => {
            reindex(l, order);
            reindex(r, order);
        }
        Node::Var(_) | Node::Num(_) => {}
    }
}
