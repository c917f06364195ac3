//! Infix and LaTeX-lite front ends.
//!
//! Infix grammar (whitespace insignificant):
//!
//! ```text
//! equation := [ident "="] expr
//! expr     := term (("+" | "-") term)*
//! term     := unary (("*" | "/") unary)*
//! unary    := ("-" | "+") unary | power
//! power    := atom [("^" | "**") unary]
//! atom     := number | constant | variable | func "(" expr ")" | "(" expr ")"
//! func     := sqrt | log | ln | exp | square | cube
//! constant := "c" digits | "c_" digits
//! ```
//!
//! LaTeX-lite additionally accepts `\frac{a}{b}`, `\sqrt{a}`, `\cdot`,
//! `\times`, `^{...}`, `\exp`, `\log`, `\ln`, `\left(`/`\right)`, subscripted
//! symbols (`c_1`, `x_{12}`), `$` delimiters and implicit multiplication by
//! juxtaposition. Anything else is a syntax error.
//!
//! Literal numbers become fresh constants whose initial guess is the literal,
//! except inside an exponent, where a purely numeric exponent is kept as a
//! fixed value.

use serde::{Deserialize, Serialize};

use super::eval::apply_binary;
use super::{BinaryOp, ExprError, Expression, Node, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    LatexLite,
    Infix,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Eq,
}

/// Parses `text` into an expression over `vars` (positional: `vars[0]` is
/// `x1`). An equation `y = rhs` is accepted when the left side is a bare
/// dependent-variable name that does not reappear on the right.
pub fn parse(text: &str, dialect: Dialect, vars: &[String]) -> Result<Expression, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Syntax("empty expression".into()));
    }
    if vars.is_empty() {
        return Err(ExprError::Syntax("no variables to bind".into()));
    }
    let toks = match dialect {
        Dialect::Infix => tokenize_infix(text)?,
        Dialect::LatexLite => tokenize_latex(text)?,
    };
    let rhs = split_equation(&toks, vars)?;
    let mut parser = Parser {
        toks: rhs,
        pos: 0,
        implicit_mul: dialect == Dialect::LatexLite,
    };
    let raw = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return Err(ExprError::Syntax(format!(
            "unexpected token {:?}",
            parser.toks[parser.pos]
        )));
    }
    let mut lower = Lower {
        vars,
        const_names: Vec::new(),
        guesses: Vec::new(),
    };
    let root = lower.node(&raw, false)?;
    Ok(Expression::with_guesses(root, &lower.guesses))
}

fn is_const_name(name: &str) -> bool {
    let digits = name
        .strip_prefix("c_")
        .or_else(|| name.strip_prefix('c'))
        .unwrap_or("");
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

const FUNCS: [&str; 6] = ["sqrt", "log", "ln", "exp", "square", "cube"];

fn is_bound(name: &str, vars: &[String]) -> bool {
    is_const_name(name)
        || vars.iter().any(|v| v == name)
        || (name == "x" && vars.len() == 1)
        || name == "pi"
}

fn split_equation(toks: &[Tok], vars: &[String]) -> Result<Vec<Tok>, ExprError> {
    let eqs: Vec<usize> = toks
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == Tok::Eq)
        .map(|(i, _)| i)
        .collect();
    let free_ident = |t: &Tok| match t {
        Tok::Ident(n) if !is_bound(n, vars) && !FUNCS.contains(&n.as_str()) => Some(n.clone()),
        _ => None,
    };
    match eqs.as_slice() {
        [] => {
            if let Some(dep) = toks.iter().filter_map(free_ident).find(|n| n == "y") {
                return Err(ExprError::ImplicitForm(format!(
                    "dependent variable `{dep}` inside the expression"
                )));
            }
            Ok(toks.to_vec())
        }
        [at] => {
            let (lhs, rhs) = (&toks[..*at], &toks[at + 1..]);
            let dep = match lhs {
                [Tok::Ident(n)] if free_ident(&lhs[0]).is_some() => n.clone(),
                _ => {
                    return Err(ExprError::ImplicitForm(
                        "left-hand side is not a bare dependent variable".into(),
                    ))
                }
            };
            if rhs.iter().any(|t| matches!(t, Tok::Ident(n) if *n == dep)) {
                return Err(ExprError::ImplicitForm(format!(
                    "`{dep}` appears on both sides"
                )));
            }
            if rhs.is_empty() {
                return Err(ExprError::Syntax("nothing after `=`".into()));
            }
            Ok(rhs.to_vec())
        }
        _ => Err(ExprError::ImplicitForm("more than one `=`".into())),
    }
}

fn read_number(chars: &[char], mut i: usize) -> Result<(f64, usize), ExprError> {
    let start = i;
    while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
        i += 1;
    }
    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
        let mut j = i + 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            j += 1;
        }
        if j < chars.len() && chars[j].is_ascii_digit() {
            i = j;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    let s: String = chars[start..i].iter().collect();
    s.parse::<f64>()
        .map(|v| (v, i))
        .map_err(|_| ExprError::Syntax(format!("bad number `{s}`")))
}

fn tokenize_infix(text: &str) -> Result<Vec<Tok>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            _ if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let (v, next) = read_number(&chars, i)?;
                out.push(Tok::Num(v));
                i = next;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let word = ["numpy.", "np.", "math."]
                    .iter()
                    .find_map(|p| word.strip_prefix(p))
                    .unwrap_or(&word)
                    .to_string();
                if word.contains('.') {
                    return Err(ExprError::Syntax(format!("unknown symbol `{word}`")));
                }
                out.push(Tok::Ident(word));
            }
            '*' if chars.get(i + 1) == Some(&'*') => {
                out.push(Tok::Op('^'));
                i += 2;
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Tok::Op(c));
                i += 1;
            }
            '\u{2212}' => {
                out.push(Tok::Op('-'));
                i += 1;
            }
            '\u{00d7}' | '\u{00b7}' => {
                out.push(Tok::Op('*'));
                i += 1;
            }
            '\u{00f7}' => {
                out.push(Tok::Op('/'));
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '=' => {
                out.push(Tok::Eq);
                i += 1;
            }
            _ => return Err(ExprError::Syntax(format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

fn tokenize_latex(text: &str) -> Result<Vec<Tok>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    latex_into(&chars, &mut out)?;
    Ok(out)
}

/// Returns the contents of the brace group starting at `chars[i] == '{'` and
/// the index just past its closing brace.
fn brace_group(chars: &[char], i: usize) -> Result<(&[char], usize), ExprError> {
    if chars.get(i) != Some(&'{') {
        return Err(ExprError::Syntax("expected `{`".into()));
    }
    let mut depth = 0usize;
    for (j, &c) in chars.iter().enumerate().skip(i) {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((&chars[i + 1..j], j + 1));
                }
            }
            _ => {}
        }
    }
    Err(ExprError::Syntax("unbalanced `{`".into()))
}

fn skip_ws(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    i
}

fn latex_into(chars: &[char], out: &mut Vec<Tok>) -> Result<(), ExprError> {
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            _ if c.is_whitespace() || c == '$' => i += 1,
            '\\' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j].is_ascii_alphabetic() {
                    j += 1;
                }
                if j == start {
                    // spacing commands such as `\,` and `\;`
                    match chars.get(j) {
                        Some(',' | ';' | '!' | ' ' | ':') => {
                            i = j + 1;
                            continue;
                        }
                        _ => return Err(ExprError::Syntax("stray backslash".into())),
                    }
                }
                let cmd: String = chars[start..j].iter().collect();
                i = j;
                match cmd.as_str() {
                    "frac" => {
                        let (num, next) = brace_group(chars, skip_ws(chars, i))?;
                        let (den, next) = brace_group(chars, skip_ws(chars, next))?;
                        out.push(Tok::LParen);
                        out.push(Tok::LParen);
                        latex_into(num, out)?;
                        out.push(Tok::RParen);
                        out.push(Tok::Op('/'));
                        out.push(Tok::LParen);
                        latex_into(den, out)?;
                        out.push(Tok::RParen);
                        out.push(Tok::RParen);
                        i = next;
                    }
                    "sqrt" => {
                        let k = skip_ws(chars, i);
                        if chars.get(k) == Some(&'[') {
                            return Err(ExprError::Syntax("root index is not supported".into()));
                        }
                        let (arg, next) = brace_group(chars, k)?;
                        out.push(Tok::Ident("sqrt".into()));
                        out.push(Tok::LParen);
                        latex_into(arg, out)?;
                        out.push(Tok::RParen);
                        i = next;
                    }
                    "cdot" | "times" => out.push(Tok::Op('*')),
                    "exp" | "log" | "ln" => {
                        out.push(Tok::Ident(cmd.clone()));
                        let k = skip_ws(chars, i);
                        if chars.get(k) == Some(&'{') {
                            let (arg, next) = brace_group(chars, k)?;
                            out.push(Tok::LParen);
                            latex_into(arg, out)?;
                            out.push(Tok::RParen);
                            i = next;
                        }
                    }
                    "left" | "right" => {
                        let k = skip_ws(chars, i);
                        match chars.get(k) {
                            Some('(') => out.push(Tok::LParen),
                            Some(')') => out.push(Tok::RParen),
                            _ => {
                                return Err(ExprError::Syntax(format!(
                                    "unsupported delimiter after \\{cmd}"
                                )))
                            }
                        }
                        i = k + 1;
                    }
                    other => {
                        return Err(ExprError::Syntax(format!("unsupported command \\{other}")))
                    }
                }
            }
            '^' => {
                out.push(Tok::Op('^'));
                let k = skip_ws(chars, i + 1);
                if chars.get(k) == Some(&'{') {
                    let (arg, next) = brace_group(chars, k)?;
                    out.push(Tok::LParen);
                    latex_into(arg, out)?;
                    out.push(Tok::RParen);
                    i = next;
                } else {
                    i += 1;
                }
            }
            '{' => {
                let (arg, next) = brace_group(chars, i)?;
                out.push(Tok::LParen);
                latex_into(arg, out)?;
                out.push(Tok::RParen);
                i = next;
            }
            '}' => return Err(ExprError::Syntax("unbalanced `}`".into())),
            '0'..='9' | '.' => {
                let (v, next) = read_number(chars, i)?;
                out.push(Tok::Num(v));
                i = next;
            }
            _ if c.is_ascii_alphabetic() => {
                // bare function names are accepted without a backslash
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_alphabetic() {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                if FUNCS.contains(&word.as_str()) {
                    out.push(Tok::Ident(word));
                    i = j;
                    continue;
                }
                // otherwise a single-letter symbol with an optional subscript
                let mut name = c.to_string();
                i += 1;
                if chars.get(i) == Some(&'_') {
                    let k = i + 1;
                    if chars.get(k) == Some(&'{') {
                        let (sub, next) = brace_group(chars, k)?;
                        let sub: String = sub.iter().filter(|c| !c.is_whitespace()).collect();
                        if sub.is_empty() || !sub.chars().all(|c| c.is_ascii_alphanumeric()) {
                            return Err(ExprError::Syntax(format!("bad subscript `{sub}`")));
                        }
                        name.push_str(&sub);
                        i = next;
                    } else if let Some(d) = chars.get(k).filter(|d| d.is_ascii_alphanumeric()) {
                        name.push(*d);
                        i = k + 1;
                    } else {
                        return Err(ExprError::Syntax("dangling `_`".into()));
                    }
                }
                out.push(Tok::Ident(name));
            }
            '+' | '-' | '*' | '/' => {
                out.push(Tok::Op(c));
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '=' => {
                out.push(Tok::Eq);
                i += 1;
            }
            _ => return Err(ExprError::Syntax(format!("unexpected character `{c}`"))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Raw {
    Num(f64),
    Ident(String),
    Neg(Box<Raw>),
    Call(String, Box<Raw>),
    Bin(BinaryOp, Box<Raw>, Box<Raw>),
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    implicit_mul: bool,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Raw, ExprError> {
        let mut left = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let right = self.term()?;
            let op = if c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            left = Raw::Bin(op, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Raw, ExprError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op('*')) => BinaryOp::Mul,
                Some(Tok::Op('/')) => BinaryOp::Div,
                Some(Tok::Num(_) | Tok::Ident(_) | Tok::LParen) if self.implicit_mul => {
                    let right = self.power()?;
                    left = Raw::Bin(BinaryOp::Mul, Box::new(left), Box::new(right));
                    continue;
                }
                _ => break,
            };
            self.pos += 1;
            let right = self.unary()?;
            left = Raw::Bin(op, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Raw, ExprError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Raw::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Raw, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Raw::Bin(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Raw, ExprError> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Raw::Num(v)),
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    if !FUNCS.contains(&name.as_str()) {
                        return Err(ExprError::UnknownOperator(name));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Raw::Call(name, Box::new(arg)))
                } else if FUNCS.contains(&name.as_str()) {
                    Err(ExprError::Syntax(format!("`{name}` needs a parenthesised argument")))
                } else {
                    Ok(Raw::Ident(name))
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Tok::RParen) => Err(ExprError::Syntax("unbalanced `)`".into())),
            Some(t) => Err(ExprError::Syntax(format!("unexpected token {t:?}"))),
            None => Err(ExprError::Syntax("unexpected end of input".into())),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.next() {
            Some(Tok::RParen) => Ok(()),
            _ => Err(ExprError::Syntax("unbalanced `(`".into())),
        }
    }
}

struct Lower<'a> {
    vars: &'a [String],
    const_names: Vec<String>,
    guesses: Vec<f64>,
}

/// Value of a purely numeric subtree, or `None` if it mentions a symbol.
fn literal_value(raw: &Raw) -> Option<Option<f64>> {
    match raw {
        Raw::Num(v) => Some(Some(*v)),
        Raw::Ident(n) if n == "pi" => Some(Some(std::f64::consts::PI)),
        Raw::Ident(_) | Raw::Call(..) => None,
        Raw::Neg(c) => literal_value(c).map(|v| v.map(|v| -v)),
        Raw::Bin(op, l, r) => {
            let a = literal_value(l)?;
            let b = literal_value(r)?;
            Some(a.zip(b).and_then(|(a, b)| apply_binary(*op, a, b)))
        }
    }
}

impl Lower<'_> {
    fn fresh_const(&mut self, guess: f64) -> Node {
        self.guesses.push(guess);
        self.const_names.push(String::new());
        Node::Const(self.guesses.len())
    }

    fn node(&mut self, raw: &Raw, in_exponent: bool) -> Result<Node, ExprError> {
        if let Some(value) = literal_value(raw) {
            let v = value.ok_or_else(|| {
                ExprError::Syntax("numeric literal expression is undefined".into())
            })?;
            return Ok(if in_exponent {
                Node::Num(v)
            } else {
                self.fresh_const(v)
            });
        }
        Ok(match raw {
            Raw::Num(_) => unreachable!("handled as literal"),
            Raw::Ident(name) => self.ident(name)?,
            Raw::Neg(c) => Node::unary(UnaryOp::Neg, self.node(c, false)?),
            Raw::Call(name, arg) => {
                let op = match name.as_str() {
                    "sqrt" => UnaryOp::Sqrt,
                    "log" | "ln" => UnaryOp::Log,
                    "exp" => UnaryOp::Exp,
                    "square" => UnaryOp::Square,
                    "cube" => UnaryOp::Cube,
                    other => return Err(ExprError::UnknownOperator(other.to_string())),
                };
                Node::unary(op, self.node(arg, false)?)
            }
            Raw::Bin(BinaryOp::Pow, base, exp) => {
                let base = self.node(base, false)?;
                let exp = self.node(exp, true)?;
                Node::binary(BinaryOp::Pow, base, exp)
            }
            Raw::Bin(op, l, r) => {
                let l = self.node(l, false)?;
                let r = self.node(r, false)?;
                Node::binary(*op, l, r)
            }
        })
    }

    fn ident(&mut self, name: &str) -> Result<Node, ExprError> {
        if is_const_name(name) {
            let key = name.replace('_', "");
            if let Some(pos) = self.const_names.iter().position(|n| *n == key) {
                return Ok(Node::Const(pos + 1));
            }
            self.const_names.push(key);
            self.guesses.push(1.0);
            return Ok(Node::Const(self.guesses.len()));
        }
        if let Some(pos) = self.vars.iter().position(|v| v == name) {
            return Ok(Node::Var(pos + 1));
        }
        if name == "x" && self.vars.len() == 1 {
            return Ok(Node::Var(1));
        }
        Err(ExprError::Syntax(format!("unknown symbol `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1() -> Vec<String> {
        vec!["x1".to_string()]
    }

    fn b(op: BinaryOp, l: Node, r: Node) -> Node {
        Node::binary(op, l, r)
    }

    fn langmuir_tree() -> Node {
        b(
            BinaryOp::Div,
            b(BinaryOp::Mul, Node::Const(1), Node::Var(1)),
            b(BinaryOp::Add, Node::Const(2), Node::Var(1)),
        )
    }

    #[test]
    fn langmuir_infix() {
        let e = parse("c1*x1/(c2+x1)", Dialect::Infix, &x1()).unwrap();
        assert_eq!(e.root(), &langmuir_tree());
    }

    #[test]
    fn langmuir_latex_matches_infix() {
        let latex = parse(r"\frac{c_1 x_1}{c_2 + x_1}", Dialect::LatexLite, &x1()).unwrap();
        let infix = parse("c1*x1/(c2+x1)", Dialect::Infix, &x1()).unwrap();
        assert_eq!(latex, infix);
        assert_eq!(latex.root(), &langmuir_tree());
    }

    #[test]
    fn single_variable() {
        let e = parse("x1", Dialect::Infix, &x1()).unwrap();
        assert_eq!(e.root(), &Node::Var(1));
    }

    #[test]
    fn bode_form_operators() {
        let e = parse("c1*exp(c2*x1)+c3", Dialect::Infix, &x1()).unwrap();
        let expected = b(
            BinaryOp::Add,
            b(
                BinaryOp::Mul,
                Node::Const(1),
                Node::unary(UnaryOp::Exp, b(BinaryOp::Mul, Node::Const(2), Node::Var(1))),
            ),
            Node::Const(3),
        );
        assert_eq!(e.root(), &expected);
    }

    #[test]
    fn literals_become_constants_with_guess() {
        let e = parse("2.5*x1 + c1", Dialect::Infix, &x1()).unwrap();
        assert_eq!(e.render(), "c1*x1+c2");
        assert_eq!(e.initial_guess(), &[2.5, 1.0]);
    }

    #[test]
    fn numeric_exponent_stays_fixed() {
        let e = parse("c1*x1^(3/2)", Dialect::Infix, &x1()).unwrap();
        assert_eq!(e.n_constants(), 1);
        assert_eq!(e.render(), "c1*x1^1.5");
        let f = parse("c1*x1**1.5", Dialect::Infix, &x1()).unwrap();
        assert_eq!(e, f);
        let g = parse("c1*x1^c2", Dialect::Infix, &x1()).unwrap();
        assert_ne!(e, g);
    }

    #[test]
    fn repeated_constant_name_is_shared() {
        let e = parse("c2*x1 + c2", Dialect::Infix, &x1()).unwrap();
        assert_eq!(e.n_constants(), 1);
        assert_eq!(e.render(), "c1*x1+c1");
    }

    #[test]
    fn equation_forms() {
        let e = parse("y = c1*x1", Dialect::Infix, &x1()).unwrap();
        assert_eq!(e.render(), "c1*x1");
        assert!(matches!(
            parse("y = c1*x1 + y", Dialect::Infix, &x1()),
            Err(ExprError::ImplicitForm(_))
        ));
        assert!(matches!(
            parse("c1*x1 = c2", Dialect::Infix, &x1()),
            Err(ExprError::ImplicitForm(_))
        ));
        assert!(matches!(
            parse("y^2 = c1*x1", Dialect::Infix, &x1()),
            Err(ExprError::ImplicitForm(_))
        ));
        assert!(matches!(
            parse("c1*x1 - y", Dialect::Infix, &x1()),
            Err(ExprError::ImplicitForm(_))
        ));
    }

    #[test]
    fn syntax_errors() {
        for bad in ["c1*(x1+c2", "c1*x1)", "c1*z", "c1 x1", "x1 +", "c1 % x1", ""] {
            assert!(
                matches!(parse(bad, Dialect::Infix, &x1()), Err(ExprError::Syntax(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn unknown_operator() {
        assert_eq!(
            parse("sin(x1)", Dialect::Infix, &x1()),
            Err(ExprError::UnknownOperator("sin".into()))
        );
    }

    #[test]
    fn python_prefixes_and_aliases() {
        let e = parse("c1*np.exp(c2*x)", Dialect::Infix, &x1()).unwrap();
        assert_eq!(e.render(), "c1*exp(c2*x1)");
        let l = parse("ln(x1)", Dialect::Infix, &x1()).unwrap();
        assert_eq!(l.render(), "log(x1)");
    }

    #[test]
    fn latex_constructs() {
        let vars = x1();
        let cases = [
            (r"$c_1 \cdot \sqrt{x_1}$", "c1*sqrt(x1)"),
            (r"c_{1} \exp\left(c_2 x_1\right) + c_3", "c1*exp(c2*x1)+c3"),
            (r"y = c_1 x_1^{3/2}", "c1*x1^1.5"),
            (r"c_1 \times x_1 - c_2", "c1*x1-c2"),
            (r"\log{x_1}", "log(x1)"),
        ];
        for (src, want) in cases {
            let e = parse(src, Dialect::LatexLite, &vars).unwrap();
            assert_eq!(e.render(), want, "{src}");
        }
        assert!(matches!(
            parse(r"\sin{x_1}", Dialect::LatexLite, &vars),
            Err(ExprError::Syntax(_))
        ));
        assert!(matches!(
            parse(r"\frac{c_1}{x_1", Dialect::LatexLite, &vars),
            Err(ExprError::Syntax(_))
        ));
        assert!(matches!(
            parse(r"\sqrt[3]{x_1}", Dialect::LatexLite, &vars),
            Err(ExprError::Syntax(_))
        ));
    }

    #[test]
    fn multi_variable_names() {
        let vars = vec!["x1".to_string(), "x2".to_string()];
        let e = parse("c1*x1 + c2*x2^2", Dialect::Infix, &vars).unwrap();
        assert_eq!(e.variables().len(), 2);
        assert!(parse("c1*x", Dialect::Infix, &vars).is_err());
    }
}
