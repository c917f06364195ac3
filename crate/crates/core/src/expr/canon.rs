//! Canonical form under constant absorption.
//!
//! Two expressions that describe the same family of curves once their free
//! constants are fitted (`x1+c1` and `x1-c1`, `c1*(c2+x1)` and `c1+c2*x1`)
//! share a canonical form. The rewrite works on a flattened sum/product
//! representation:
//!
//! * variable-free subtrees with a constant collapse to one constant;
//!   purely numeric subtrees (fixed exponents) evaluate to a number
//! * signs are pulled out of products and sums and absorbed by any constant
//!   factor or constant term
//! * constant factors and constant terms fold into one constant each
//! * `c*(c+t)` distributes to `c + c*t`
//! * repeated bases in a product merge their fixed exponents; `sqrt`,
//!   `square`, `cube` are fixed exponents `0.5`, `2`, `3`
//! * operands of `+` and `*` are sorted by a total order on shapes that
//!   ignores constant indices
//!
//! The result never has more nodes than the input, and canonicalising twice
//! is the same as canonicalising once.

use std::cmp::Ordering;

use super::eval::eval_node;
use super::{BinaryOp, Node, UnaryOp};

#[derive(Debug, Clone, PartialEq)]
enum Canon {
    Const,
    Num(f64),
    Var(usize),
    /// Two or more terms, at most one of them `Const` (always positive).
    Sum(Vec<Term>),
    /// Product with optional denominator. Factors are never products and
    /// never negated; at most one `Const`, always in `num`.
    Prod { num: Vec<Canon>, den: Vec<Canon> },
    Pow(Box<Canon>, Box<Canon>),
    Func(UnaryOp, Box<Canon>),
    Neg(Box<Canon>),
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    neg: bool,
    node: Canon,
}

#[derive(Debug, Clone, PartialEq)]
struct Signed {
    neg: bool,
    node: Canon,
}

impl Signed {
    fn pos(node: Canon) -> Signed {
        Signed { neg: false, node }
    }

    /// Folds the sign into the node where the node can absorb it.
    fn settle(self) -> Signed {
        if self.node.absorbs_sign() {
            Signed::pos(self.node)
        } else {
            self
        }
    }

    fn embed(self) -> Canon {
        if self.neg {
            Canon::Neg(Box::new(self.node))
        } else {
            self.node
        }
    }
}

impl Canon {
    fn absorbs_sign(&self) -> bool {
        match self {
            Canon::Const => true,
            Canon::Prod { num, den } => num.iter().chain(den).any(Canon::absorbs_sign),
            Canon::Sum(terms) => terms.iter().all(|t| t.node.absorbs_sign()),
            _ => false,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Canon::Const => 0,
            Canon::Num(_) => 1,
            Canon::Var(_) => 2,
            Canon::Func(..) => 3,
            Canon::Pow(..) => 4,
            Canon::Prod { .. } => 5,
            Canon::Sum(_) => 6,
            Canon::Neg(_) => 7,
        }
    }
}

fn cmp_list(a: &[Canon], b: &[Canon]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match cmp_canon(x, y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

fn cmp_term(a: &Term, b: &Term) -> Ordering {
    cmp_canon(&a.node, &b.node).then(a.neg.cmp(&b.neg))
}

/// Total order on shapes; all constants compare equal.
fn cmp_canon(a: &Canon, b: &Canon) -> Ordering {
    match (a, b) {
        (Canon::Const, Canon::Const) => Ordering::Equal,
        (Canon::Num(x), Canon::Num(y)) => x.total_cmp(y),
        (Canon::Var(x), Canon::Var(y)) => x.cmp(y),
        (Canon::Func(f, x), Canon::Func(g, y)) => f.cmp(g).then_with(|| cmp_canon(x, y)),
        (Canon::Pow(b1, e1), Canon::Pow(b2, e2)) => {
            cmp_canon(b1, b2).then_with(|| cmp_canon(e1, e2))
        }
        (Canon::Prod { num: n1, den: d1 }, Canon::Prod { num: n2, den: d2 }) => {
            cmp_list(n1, n2).then_with(|| cmp_list(d1, d2))
        }
        (Canon::Sum(t1), Canon::Sum(t2)) => {
            for (x, y) in t1.iter().zip(t2) {
                match cmp_term(x, y) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            t1.len().cmp(&t2.len())
        }
        (Canon::Neg(x), Canon::Neg(y)) => cmp_canon(x, y),
        _ => a.rank().cmp(&b.rank()),
    }
}

pub(super) fn canonicalize(root: &Node) -> Node {
    rebuild_signed(norm(root))
}

fn norm(node: &Node) -> Signed {
    if !node.has_var() {
        if node.has_const() {
            return Signed::pos(Canon::Const);
        }
        if let Some(v) = eval_node(node, &[], &[]) {
            return Signed::pos(Canon::Num(v));
        }
        // undefined literal arithmetic; treat as a free constant
        return Signed::pos(Canon::Const);
    }
    match node {
        Node::Var(i) => Signed::pos(Canon::Var(*i)),
        Node::Const(_) | Node::Num(_) => unreachable!("variable-free"),
        Node::Unary(UnaryOp::Neg, c) => negate(norm(c)),
        Node::Unary(op @ (UnaryOp::Log | UnaryOp::Exp), c) => {
            Signed::pos(Canon::Func(*op, Box::new(norm(c).embed())))
        }
        Node::Unary(op, c) => {
            let e = match op {
                UnaryOp::Sqrt => 0.5,
                UnaryOp::Square => 2.0,
                _ => 3.0,
            };
            fixed_power(norm(c), e)
        }
        Node::Binary(BinaryOp::Add, l, r) => sum(vec![norm(l), norm(r)]),
        Node::Binary(BinaryOp::Sub, l, r) => sum(vec![norm(l), negate(norm(r))]),
        Node::Binary(BinaryOp::Mul, l, r) => product(norm(l), norm(r), false),
        Node::Binary(BinaryOp::Div, l, r) => product(norm(l), norm(r), true),
        Node::Binary(BinaryOp::Pow, l, r) => {
            let exp = norm(r);
            match exp {
                Signed {
                    neg: false,
                    node: Canon::Num(e),
                } => fixed_power(norm(l), e),
                exp => Signed::pos(make_pow(norm(l).embed(), exp.embed())),
            }
        }
    }
}

fn negate(s: Signed) -> Signed {
    match s.node {
        Canon::Sum(terms) if !s.neg => {
            let flipped = terms
                .into_iter()
                .map(|t| Term {
                    neg: !t.neg,
                    node: t.node,
                })
                .collect();
            finish_sum(flipped)
        }
        node => Signed {
            neg: !s.neg,
            node,
        }
        .settle(),
    }
}

fn fixed_power(base: Signed, e: f64) -> Signed {
    let integer = e.fract() == 0.0;
    let even = integer && (e / 2.0).fract() == 0.0;
    if base.neg && integer {
        let p = make_pow(base.node, Canon::Num(e));
        return if even {
            Signed::pos(p)
        } else {
            Signed { neg: true, node: p }.settle()
        };
    }
    Signed::pos(make_pow(base.embed(), Canon::Num(e)))
}

fn make_pow(base: Canon, exp: Canon) -> Canon {
    if exp == Canon::Num(1.0) {
        return base;
    }
    match (base, exp) {
        (Canon::Const, Canon::Const | Canon::Num(_)) => Canon::Const,
        (Canon::Pow(b, inner), Canon::Const)
            if matches!(*inner, Canon::Const | Canon::Num(_)) && !matches!(*b, Canon::Neg(_)) =>
        {
            Canon::Pow(b, Box::new(Canon::Const))
        }
        // a negated base keeps its nesting: merging could expose the sign
        (Canon::Pow(b, inner), Canon::Num(e)) if !matches!(*b, Canon::Neg(_)) => match *inner {
            Canon::Num(a) => make_pow(*b, Canon::Num(a * e)),
            Canon::Const => Canon::Pow(b, Box::new(Canon::Const)),
            other => Canon::Pow(Box::new(Canon::Pow(b, Box::new(other))), Box::new(Canon::Num(e))),
        },
        (Canon::Prod { num, den }, exp @ (Canon::Num(_) | Canon::Const))
            if num.contains(&Canon::Const) && num.iter().any(|f| *f != Canon::Const) =>
        {
            let rest: Vec<Canon> = num.into_iter().filter(|f| *f != Canon::Const).collect();
            let rest = build_product(rest, den);
            let powered = make_pow(rest, exp);
            product(Signed::pos(powered), Signed::pos(Canon::Const), false).node
        }
        (base, exp) => Canon::Pow(Box::new(base), Box::new(exp)),
    }
}

fn factors_of(c: Canon) -> (Vec<Canon>, Vec<Canon>) {
    match c {
        Canon::Prod { num, den } => (num, den),
        other => (vec![other], Vec::new()),
    }
}

/// Sorts and assembles factors; collapses trivial products.
fn build_product(mut num: Vec<Canon>, mut den: Vec<Canon>) -> Canon {
    num.sort_by(cmp_canon);
    den.sort_by(cmp_canon);
    if den.is_empty() && num.len() == 1 {
        return num.pop().unwrap();
    }
    if den.is_empty() && num.is_empty() {
        return Canon::Num(1.0);
    }
    Canon::Prod { num, den }
}

fn sum(parts: Vec<Signed>) -> Signed {
    let mut terms = Vec::new();
    for part in parts {
        match part.node {
            Canon::Sum(inner) => terms.extend(inner.into_iter().map(|t| Term {
                neg: t.neg ^ part.neg,
                node: t.node,
            })),
            node => terms.push(Term {
                neg: part.neg,
                node,
            }),
        }
    }
    finish_sum(terms)
}

fn finish_sum(terms: Vec<Term>) -> Signed {
    let mut has_const = false;
    let mut out: Vec<Term> = Vec::new();
    for t in terms {
        if t.node == Canon::Const {
            has_const = true;
            continue;
        }
        let neg = t.neg && !t.node.absorbs_sign();
        out.push(Term { neg, node: t.node });
    }
    if has_const {
        out.push(Term {
            neg: false,
            node: Canon::Const,
        });
    }
    out.sort_by(cmp_term);
    if out.len() == 1 {
        let t = out.pop().unwrap();
        return Signed {
            neg: t.neg,
            node: t.node,
        };
    }
    if !has_const && out.iter().all(|t| t.neg) {
        for t in &mut out {
            t.neg = false;
        }
        return Signed {
            neg: true,
            node: Canon::Sum(out),
        };
    }
    Signed::pos(Canon::Sum(out))
}

fn product(left: Signed, right: Signed, divide: bool) -> Signed {
    let neg = left.neg ^ right.neg;
    let (mut num, mut den) = factors_of(left.node);
    let (rn, rd) = factors_of(right.node);
    if divide {
        num.extend(rd);
        den.extend(rn);
    } else {
        num.extend(rn);
        den.extend(rd);
    }

    let mut has_const = false;
    let mut scale = 1.0;
    let mut take = |fs: Vec<Canon>, invert: bool| -> Vec<Canon> {
        let mut kept = Vec::new();
        for f in fs {
            match f {
                Canon::Const => has_const = true,
                Canon::Num(v) => {
                    scale = if invert { scale / v } else { scale * v };
                }
                other => kept.push(other),
            }
        }
        kept
    };
    let mut num = merge_powers(take(std::mem::take(&mut num), false));
    let den = merge_powers(take(std::mem::take(&mut den), true));
    if has_const {
        num.push(Canon::Const);
    } else if scale != 1.0 {
        num.push(Canon::Num(scale));
    }

    // c*(c + t)*r -> (c + c*t)*r; more generally a constant factor folds
    // into a numerator sum in which at most one term lacks a constant
    if has_const {
        if let Some(pos) = num.iter().position(distributes) {
            let Canon::Sum(terms) = num.remove(pos) else {
                unreachable!()
            };
            num.retain(|f| *f != Canon::Const);
            let scaled: Vec<Signed> = terms
                .into_iter()
                .map(|t| {
                    if t.node.absorbs_sign() {
                        Signed::pos(t.node)
                    } else {
                        product(Signed::pos(Canon::Const), Signed::pos(t.node), false)
                    }
                })
                .collect();
            let distributed = sum(scaled);
            if num.is_empty() && den.is_empty() {
                return distributed;
            }
            let rest = build_product(num, den);
            return product(distributed, Signed::pos(rest), false);
        }
    }

    Signed {
        neg,
        node: build_product(num, den),
    }
    .settle()
}

fn distributes(f: &Canon) -> bool {
    match f {
        Canon::Sum(terms) => terms.iter().filter(|t| !t.node.absorbs_sign()).count() <= 1,
        _ => false,
    }
}

/// Combines factors that share a base, adding their fixed exponents.
fn merge_powers(factors: Vec<Canon>) -> Vec<Canon> {
    let split = |f: &Canon| -> Option<(Canon, f64)> {
        match f {
            Canon::Pow(b, e) => match **e {
                Canon::Num(v) => Some(((**b).clone(), v)),
                _ => None,
            },
            other => Some((other.clone(), 1.0)),
        }
    };
    let mut groups: Vec<(Canon, f64, Vec<Canon>)> = Vec::new();
    let mut out = Vec::new();
    for f in factors {
        match split(&f) {
            Some((base, e)) => match groups.iter_mut().find(|g| g.0 == base) {
                Some(g) => {
                    g.1 += e;
                    g.2.push(f);
                }
                None => groups.push((base, e, vec![f])),
            },
            None => out.push(f),
        }
    }
    for (base, e, originals) in groups {
        // a single factor, or exponents that cancel, stay as written
        if originals.len() == 1 || e == 0.0 {
            out.extend(originals);
            continue;
        }
        match make_pow(base, Canon::Num(e)) {
            Canon::Prod { num, den } if den.is_empty() => out.extend(num),
            merged => out.push(merged),
        }
    }
    out
}

fn rebuild_signed(s: Signed) -> Node {
    let mut next = 0;
    let node = rebuild(s.node, &mut next);
    if s.neg {
        Node::unary(UnaryOp::Neg, node)
    } else {
        node
    }
}

fn fold(op: BinaryOp, parts: Vec<Canon>, next: &mut usize) -> Node {
    let mut it = parts.into_iter();
    let first = rebuild(it.next().expect("non-empty operand list"), next);
    it.fold(first, |acc, c| Node::binary(op, acc, rebuild(c, next)))
}

/// Converts back to a tree; every constant gets a fresh index.
fn rebuild(c: Canon, next: &mut usize) -> Node {
    match c {
        Canon::Const => {
            *next += 1;
            Node::Const(*next)
        }
        Canon::Num(v) => Node::Num(v),
        Canon::Var(i) => Node::Var(i),
        Canon::Neg(inner) => Node::unary(UnaryOp::Neg, rebuild(*inner, next)),
        Canon::Func(op, arg) => Node::unary(op, rebuild(*arg, next)),
        Canon::Pow(base, exp) => {
            let b = rebuild(*base, next);
            match *exp {
                Canon::Num(0.5) => Node::unary(UnaryOp::Sqrt, b),
                Canon::Num(2.0) => Node::unary(UnaryOp::Square, b),
                Canon::Num(3.0) => Node::unary(UnaryOp::Cube, b),
                exp => Node::binary(BinaryOp::Pow, b, rebuild(exp, next)),
            }
        }
        Canon::Prod { num, den } => {
            let numerator = if num.is_empty() {
                Node::Num(1.0)
            } else {
                fold(BinaryOp::Mul, num, next)
            };
            if den.is_empty() {
                numerator
            } else {
                Node::binary(BinaryOp::Div, numerator, fold(BinaryOp::Mul, den, next))
            }
        }
        Canon::Sum(terms) => {
            let lead = terms.iter().position(|t| !t.neg).unwrap_or(0);
            let mut rest = terms;
            let first = rest.remove(lead);
            let mut acc = rebuild(first.node, next);
            if first.neg {
                acc = Node::unary(UnaryOp::Neg, acc);
            }
            for t in rest {
                let op = if t.neg { BinaryOp::Sub } else { BinaryOp::Add };
                acc = Node::binary(op, acc, rebuild(t.node, next));
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Dialect, Expression};

    fn e(s: &str) -> Expression {
        let vars = vec!["x1".to_string(), "x2".to_string()];
        parse(s, Dialect::Infix, &vars).unwrap()
    }

    fn canon(s: &str) -> String {
        e(s).canonicalize().render()
    }

    #[test]
    fn subtraction_of_constant() {
        assert_eq!(canon("x1-c1"), canon("x1+c1"));
        assert_eq!(canon("x1-c1"), "c1+x1");
    }

    #[test]
    fn distribution_over_constant_sum() {
        assert_eq!(canon("c1*(c2+x1)"), "c1+c2*x1");
        assert_eq!(canon("(x1-c2)/c1"), "c1+c2*x1");
    }

    #[test]
    fn commutative_sort() {
        assert_eq!(canon("c1*x1/(c2+x1)"), canon("c3*x1/(x1+c4)"));
        assert_eq!(canon("x1*c3/(x1+c4)"), "c1*x1/(c2+x1)");
    }

    #[test]
    fn constant_folding() {
        assert_eq!(canon("c1*c2*x1"), "c1*x1");
        assert_eq!(canon("x1/c1*c2"), "c1*x1");
        assert_eq!(canon("c1+c2+x1"), "c1+x1");
        assert_eq!(canon("-c1*x1"), "c1*x1");
        assert_eq!(canon("x1-c1*x2"), canon("x1+c1*x2"));
        assert_eq!(canon("exp(c1+c2)*x1"), "c1*x1");
    }

    #[test]
    fn distinct_shapes_stay_distinct() {
        assert_ne!(canon("c1*x1"), canon("c1*x1+c2"));
        assert_ne!(canon("x1-x2"), canon("x1+x2"));
        assert_ne!(canon("c1*x1^c2"), canon("c1*x1^(3/2)"));
        assert_ne!(canon("c1*(c2+x1+x2)"), canon("c1+c2*x1+c3*x2"));
    }

    #[test]
    fn fixed_powers_merge() {
        assert_eq!(canon("c1*x1*sqrt(x1)"), canon("c1*x1^1.5"));
        assert_eq!(canon("x1*x1"), "square(x1)");
        assert_eq!(canon("sqrt(x1)^2"), "x1");
        assert_eq!(canon("(c1*x1)^2"), "c1*square(x1)");
        assert_eq!(canon("square(-x1)"), "square(x1)");
        assert_eq!(canon("cube(-x1)"), "-cube(x1)");
    }

    #[test]
    fn sign_normal_forms() {
        assert_eq!(canon("-(x1-x2)"), canon("x2-x1"));
        assert_eq!(canon("-x1-x2"), "-(x1+x2)");
        assert_eq!(canon("-(c1+x1)"), canon("c1-x1"));
        assert_eq!(canon("x1*(-x2)"), "-(x1*x2)");
    }

    #[test]
    fn idempotent_on_examples() {
        for s in [
            "c1*x1/(c2+x1)+c3*x1/(c4+x1)",
            "c1*exp(c2*x1)+c3",
            "-(x1-c1)*x2/(c2-x1)",
            "sqrt(x1*c1)^3-log(x2/c2)",
            "x1^x2*c1-(c2*(c3-x1))",
        ] {
            let once = e(s).canonicalize();
            let twice = once.canonicalize();
            assert_eq!(once, twice, "{s}: {once} vs {twice}");
            assert!(once.complexity() <= e(s).complexity(), "{s}");
        }
    }
}
