use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BinaryOp, ExprError, Node, UnaryOp};

/// One searchable operator, spelled as in prompts and config files:
/// `+ - * / ^ sqrt log exp square cube`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Operator {
    Binary(BinaryOp),
    Unary(UnaryOp),
}

impl FromStr for Operator {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "+" => Operator::Binary(BinaryOp::Add),
            "-" => Operator::Binary(BinaryOp::Sub),
            "*" => Operator::Binary(BinaryOp::Mul),
            "/" => Operator::Binary(BinaryOp::Div),
            "^" | "**" | "pow" => Operator::Binary(BinaryOp::Pow),
            "sqrt" => Operator::Unary(UnaryOp::Sqrt),
            "log" => Operator::Unary(UnaryOp::Log),
            "exp" => Operator::Unary(UnaryOp::Exp),
            "square" => Operator::Unary(UnaryOp::Square),
            "cube" => Operator::Unary(UnaryOp::Cube),
            other => return Err(ExprError::UnknownOperator(other.to_string())),
        })
    }
}

impl TryFrom<String> for Operator {
    type Error = ExprError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Operator> for String {
    fn from(op: Operator) -> String {
        op.to_string()
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Binary(b) => f.write_str(b.symbol()),
            Operator::Unary(u) => f.write_str(u.name()),
        }
    }
}

const BASIC: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];
const COMMON_UNARY: [UnaryOp; 5] = [
    UnaryOp::Sqrt,
    UnaryOp::Log,
    UnaryOp::Exp,
    UnaryOp::Square,
    UnaryOp::Cube,
];

/// The operators an expression may use.
///
/// Negation is always allowed. A `pow` with a fixed integer exponent is
/// always allowed (it is repeated multiplication); a fixed half-integer
/// exponent needs `sqrt` or `^`; any other exponent needs `^`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSet {
    pub name: String,
    pub binary: BTreeSet<BinaryOp>,
    pub unary: BTreeSet<UnaryOp>,
}

impl OperatorSet {
    /// Builds a set from operator spellings. Errors on an empty binary set.
    pub fn custom(name: &str, ops: &[Operator]) -> Result<OperatorSet, ExprError> {
        let mut set = OperatorSet {
            name: name.to_string(),
            binary: BTreeSet::new(),
            unary: BTreeSet::new(),
        };
        set.extend(ops);
        if set.binary.is_empty() {
            return Err(ExprError::Syntax(
                "operator set needs at least one binary operator".into(),
            ));
        }
        Ok(set)
    }

    /// `+ - * /` plus the dataset-specific additions.
    pub fn easy(extras: &[Operator]) -> OperatorSet {
        let mut set = OperatorSet {
            name: "easy".into(),
            binary: BASIC.into_iter().collect(),
            unary: BTreeSet::new(),
        };
        set.extend(extras);
        set
    }

    /// The easy set plus `sqrt log exp square cube`.
    pub fn hard(extras: &[Operator]) -> OperatorSet {
        let mut set = OperatorSet::easy(extras);
        set.name = "hard".into();
        set.unary.extend(COMMON_UNARY);
        set
    }

    fn extend(&mut self, ops: &[Operator]) {
        for op in ops {
            match *op {
                Operator::Binary(b) => {
                    self.binary.insert(b);
                }
                Operator::Unary(UnaryOp::Neg) => {}
                Operator::Unary(u) => {
                    self.unary.insert(u);
                }
            }
        }
    }

    /// Operators in prompt order: binary `+ - * / ^`, then unary functions.
    pub fn operators(&self) -> Vec<Operator> {
        self.binary
            .iter()
            .map(|&b| Operator::Binary(b))
            .chain(self.unary.iter().map(|&u| Operator::Unary(u)))
            .collect()
    }

    /// Comma-separated operator list, e.g. `+, -, *, /, sqrt`.
    pub fn describe(&self) -> String {
        self.operators()
            .iter()
            .map(|o| o.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn contains(&self, op: Operator) -> bool {
        match op {
            Operator::Binary(b) => self.binary.contains(&b),
            Operator::Unary(UnaryOp::Neg) => true,
            Operator::Unary(u) => self.unary.contains(&u),
        }
    }

    pub(crate) fn validate(&self, node: &Node) -> Result<(), ExprError> {
        match node {
            Node::Const(_) | Node::Var(_) | Node::Num(_) => Ok(()),
            Node::Unary(op, c) => {
                if !self.contains(Operator::Unary(*op)) {
                    return Err(ExprError::DisallowedOperator(op.name().into()));
                }
                self.validate(c)
            }
            Node::Binary(BinaryOp::Pow, base, exp) => {
                let allowed = match exp.as_ref() {
                    Node::Num(v) if v.fract() == 0.0 => true,
                    Node::Num(v) if (2.0 * v).fract() == 0.0 => {
                        self.binary.contains(&BinaryOp::Pow)
                            || self.unary.contains(&UnaryOp::Sqrt)
                    }
                    _ => self.binary.contains(&BinaryOp::Pow),
                };
                if !allowed {
                    return Err(ExprError::DisallowedOperator("^".into()));
                }
                self.validate(base)?;
                self.validate(exp)
            }
            Node::Binary(op, l, r) => {
                if !self.binary.contains(op) {
                    return Err(ExprError::DisallowedOperator(op.symbol().into()));
                }
                self.validate(l)?;
                self.validate(r)
            }
        }
    }
}
