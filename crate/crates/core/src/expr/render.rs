use super::{BinaryOp, Node, UnaryOp};

const ATOM: u8 = 5;

fn prec(node: &Node) -> u8 {
    match node {
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
        Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
        Node::Unary(UnaryOp::Neg, _) => 3,
        Node::Binary(BinaryOp::Pow, ..) => 4,
        Node::Num(v) if *v < 0.0 || v.is_sign_negative() => 3,
        _ => ATOM,
    }
}

pub(super) fn render(node: &Node, names: Option<&[String]>) -> String {
    let mut out = String::new();
    write(node, names, &mut out);
    out
}

fn wrapped(node: &Node, names: Option<&[String]>, paren: bool, out: &mut String) {
    if paren {
        out.push('(');
        write(node, names, out);
        out.push(')');
    } else {
        write(node, names, out);
    }
}

fn write(node: &Node, names: Option<&[String]>, out: &mut String) {
    match node {
        Node::Const(i) => {
            out.push('c');
            out.push_str(&i.to_string());
        }
        Node::Var(i) => match names.and_then(|n| n.get(i - 1)) {
            Some(name) => out.push_str(name),
            None => {
                out.push('x');
                out.push_str(&i.to_string());
            }
        },
        Node::Num(v) => out.push_str(&format!("{v}")),
        Node::Unary(UnaryOp::Neg, c) => {
            out.push('-');
            wrapped(c, names, prec(c) <= 3, out);
        }
        Node::Unary(op, c) => {
            out.push_str(op.name());
            wrapped(c, names, true, out);
        }
        Node::Binary(BinaryOp::Pow, l, r) => {
            wrapped(l, names, prec(l) < ATOM, out);
            out.push('^');
            wrapped(r, names, prec(r) < ATOM, out);
        }
        Node::Binary(op, l, r) => {
            let p = prec(node);
            wrapped(l, names, prec(l) < p, out);
            out.push_str(op.symbol());
            let right_paren = prec(r) <= p || matches!(**r, Node::Unary(UnaryOp::Neg, _));
            wrapped(r, names, right_paren, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Dialect, Expression};

    #[test]
    fn simple_forms() {
        let e = Expression::new(Node::binary(BinaryOp::Add, Node::Var(1), Node::Const(1)));
        assert_eq!(e.render(), "x1+c1");
        let e = Expression::new(Node::unary(UnaryOp::Sqrt, Node::Var(1)));
        assert_eq!(e.render(), "sqrt(x1)");
    }

    #[test]
    fn parenthesisation_round_trips() {
        let vars = vec!["x1".to_string(), "x2".to_string()];
        for src in [
            "c1*x1/(c2+x1)",
            "x1-(x2-c1)",
            "x1/(x2*c1)",
            "x1/x2*c1",
            "-(x1+x2)",
            "-x1*x2",
            "-(x1*x2)",
            "x1*(-x2)",
            "(-x1)^2",
            "x1^(-1)",
            "(x1^x2)^c1",
            "x1^x2^c1",
            "-x1^2",
            "--x1",
            "square(x1+c1)-cube(x2)",
        ] {
            let e = parse(src, Dialect::Infix, &vars).unwrap();
            let back = parse(&e.render(), Dialect::Infix, &vars).unwrap();
            assert_eq!(e, back, "{src} -> {}", e.render());
        }
    }

    #[test]
    fn custom_names() {
        let e = parse("c1*x1/(c2+x1)", Dialect::Infix, &["x1".to_string()]).unwrap();
        assert_eq!(e.render_with(&["p".to_string()]), "c1*p/(c2+p)");
    }
}
