use super::{BinaryOp, Node, UnaryOp};

pub(crate) fn apply_unary(op: UnaryOp, v: f64) -> Option<f64> {
    let out = match op {
        UnaryOp::Sqrt if v < 0.0 => return None,
        UnaryOp::Sqrt => v.sqrt(),
        UnaryOp::Log if v <= 0.0 => return None,
        UnaryOp::Log => v.ln(),
        UnaryOp::Exp => v.exp(),
        UnaryOp::Square => v * v,
        UnaryOp::Cube => v * v * v,
        UnaryOp::Neg => -v,
    };
    out.is_finite().then_some(out)
}

pub(crate) fn apply_binary(op: BinaryOp, a: f64, b: f64) -> Option<f64> {
    let out = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div if b == 0.0 => return None,
        BinaryOp::Div => a / b,
        BinaryOp::Pow => a.powf(b),
    };
    out.is_finite().then_some(out)
}

pub(crate) fn eval_node(node: &Node, params: &[f64], x: &[f64]) -> Option<f64> {
    match node {
        Node::Const(i) => Some(params[i - 1]),
        Node::Var(i) => Some(x[i - 1]),
        Node::Num(v) => Some(*v),
        Node::Unary(op, c) => apply_unary(*op, eval_node(c, params, x)?),
        Node::Binary(op, l, r) => {
            let a = eval_node(l, params, x)?;
            let b = eval_node(r, params, x)?;
            apply_binary(*op, a, b)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(usize),
    Var(usize),
    Num(f64),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// Postfix form of an expression, evaluated with a reusable stack.
///
/// Produces bit-identical results to [`super::Expression::evaluate`].
#[derive(Debug, Clone)]
pub struct Compiled {
    program: Vec<Instr>,
    n_constants: usize,
    depth: usize,
}

impl Compiled {
    pub(crate) fn new(root: &Node, n_constants: usize) -> Compiled {
        let mut program = Vec::new();
        let depth = emit(root, &mut program);
        Compiled {
            program,
            n_constants,
            depth,
        }
    }

    pub fn n_constants(&self) -> usize {
        self.n_constants
    }

    /// Evaluates at one row. `stack` is scratch space reused across calls.
    pub fn eval(&self, params: &[f64], x: &[f64], stack: &mut Vec<f64>) -> Option<f64> {
        stack.clear();
        stack.reserve(self.depth);
        for instr in &self.program {
            match *instr {
                Instr::Const(i) => stack.push(params[i]),
                Instr::Var(i) => stack.push(x[i]),
                Instr::Num(v) => stack.push(v),
                Instr::Unary(op) => {
                    let v = stack.pop()?;
                    stack.push(apply_unary(op, v)?);
                }
                Instr::Binary(op) => {
                    let b = stack.pop()?;
                    let a = stack.pop()?;
                    stack.push(apply_binary(op, a, b)?);
                }
            }
        }
        stack.pop()
    }
}

fn emit(node: &Node, out: &mut Vec<Instr>) -> usize {
    match node {
        Node::Const(i) => {
            out.push(Instr::Const(i - 1));
            1
        }
        Node::Var(i) => {
            out.push(Instr::Var(i - 1));
            1
        }
        Node::Num(v) => {
            out.push(Instr::Num(*v));
            1
        }
        Node::Unary(op, c) => {
            let d = emit(c, out);
            out.push(Instr::Unary(*op));
            d
        }
        Node::Binary(op, l, r) => {
            let dl = emit(l, out);
            let dr = emit(r, out);
            out.push(Instr::Binary(*op));
            dl.max(dr + 1)
        }
    }
}
