//! A small arithmetic expression language for problem data.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-2^2`
//! is `-4` and `2^-1` is `0.5`.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval<T: Scalar>(&self, vars: &[T]) -> T {
        match self {
            Node::Const(c) => T::from_f64(*c),
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Binary(op, a, b) => {
                let (a, b) = (a.eval(vars), b.eval(vars));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.pow(b),
                }
            }
            Node::Call(f, a) => {
                let a = a.eval(vars);
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => a.sqrt(),
                }
            }
        }
    }
}

/// A parsed expression together with its variable names.
///
/// Immutable after parsing; `Send + Sync`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    vars: Vec<String>,
}

impl Expression {
    /// Parses `text`, accepting only identifiers listed in `vars`.
    pub fn parse(text: &str, vars: &[&str]) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            vars,
            end: text.len(),
        };
        if tokens.is_empty() {
            return Err(Error::Syntax {
                offset: 0,
                message: "empty expression".into(),
            });
        }
        let root = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(Error::Syntax {
                offset: t.offset,
                message: format!("unexpected {}", t.kind),
            });
        }
        Ok(Self {
            root,
            vars: vars.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn constant(value: f64, vars: &[&str]) -> Self {
        Self {
            root: Node::Const(value),
            vars: vars.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// `var ^ exponent` in a single-variable scope.
    pub fn power(var: &str, exponent: f64) -> Self {
        Self {
            root: Node::Binary(
                BinOp::Pow,
                Box::new(Node::Var(0)),
                Box::new(Node::Const(exponent)),
            ),
            vars: vec![var.to_string()],
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    /// Evaluates with variable values in declaration order.
    #[inline]
    pub fn eval<T: Scalar>(&self, vars: &[T]) -> T {
        debug_assert_eq!(vars.len(), self.vars.len());
        self.root.eval(vars)
    }

    /// Evaluates and rejects non-finite results.
    pub fn eval_checked(&self, vars: &[f64]) -> Result<f64> {
        let v = self.eval(vars);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Model(format!(
                "`{self}` is not finite at {}",
                self.describe_point(vars)
            )))
        }
    }

    pub(crate) fn describe_point(&self, vars: &[f64]) -> String {
        self.vars
            .iter()
            .zip(vars)
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn fmt_node(&self, node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match node {
            Node::Const(c) if *c < 0.0 => write!(f, "(-{:?})", -c),
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(i) => f.write_str(&self.vars[*i]),
            Node::Neg(a) => {
                f.write_str("(-")?;
                self.fmt_node(a, f)?;
                f.write_str(")")
            }
            Node::Binary(op, a, b) => {
                f.write_str("(")?;
                self.fmt_node(a, f)?;
                write!(f, " {} ", op.symbol())?;
                self.fmt_node(b, f)?;
                f.write_str(")")
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                self.fmt_node(a, f)?;
                f.write_str(")")
            }
        }
    }
}

/// Fully parenthesized; re-parses to an equivalent tree.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_node(&self.root, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Sym(char),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Number(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Sym(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let value = lit.parse::<f64>().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("malformed number `{lit}`"),
            })?;
            out.push(Token {
                kind: TokenKind::Number(value),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(text[start..i].to_string()),
                offset: start,
            });
        } else if b"+-*/^()".contains(&c) {
            out.push(Token {
                kind: TokenKind::Sym(c as char),
                offset: i,
            });
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(Error::Syntax {
                offset: i,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    vars: &'a [&'a str],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_sym(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Sym(c),
                ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn expect(&mut self, sym: char) -> Result<()> {
        if self.peek_sym() == Some(sym) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Syntax {
                offset: self.offset(),
                message: format!("expected `{sym}`"),
            })
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node> {
        if self.peek_sym() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            let exponent = self.factor()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(tok) = self.peek().cloned() else {
            return Err(Error::Syntax {
                offset: self.end,
                message: "unexpected end of input".into(),
            });
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Number(v) => Ok(Node::Const(v)),
            TokenKind::Sym('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if self.peek_sym() == Some('(') {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(Error::Syntax {
                            offset: tok.offset,
                            message: format!("unknown function `{name}`"),
                        });
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                if name == "pi" {
                    return Ok(Node::Const(std::f64::consts::PI));
                }
                if Func::from_name(&name).is_some() {
                    return Err(Error::Syntax {
                        offset: self.offset(),
                        message: format!("expected `(` after `{name}`"),
                    });
                }
                Err(Error::UnknownVariable {
                    name,
                    offset: tok.offset,
                })
            }
            other => Err(Error::Syntax {
                offset: tok.offset,
                message: format!("unexpected {other}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval1(text: &str, var: &str, x: f64) -> f64 {
        Expression::parse(text, &[var]).unwrap().eval(&[x])
    }

    #[test]
    fn evaluates_examples() {
        assert_eq!(eval1("s^(-1) * exp(0)", "s", 4.0), 0.25);
        assert_eq!(eval1("1 + 0.5*cos(2*t)", "t", 0.0), 1.5);
    }

    #[test]
    fn syntax_error_offset() {
        match Expression::parse("s +* 2", &["s"]) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
        match Expression::parse("cos(t", &["t"]) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Expression::parse("", &["t"]),
            Err(Error::Syntax { offset: 0, .. })
        ));
        assert!(matches!(
            Expression::parse("2 $ 3", &[]),
            Err(Error::Syntax { offset: 2, .. })
        ));
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(
            Expression::parse("s + q", &["s"]),
            Err(Error::UnknownVariable { offset: 4, .. })
        ));
        assert!(matches!(
            Expression::parse("tan(s)", &["s"]),
            Err(Error::Syntax { offset: 0, .. })
        ));
    }

    #[test]
    fn precedence() {
        assert_eq!(eval1("2^3^2", "x", 0.0), 512.0);
        assert_eq!(eval1("-2^2", "x", 0.0), -4.0);
        assert_eq!(eval1("2^-1", "x", 0.0), 0.5);
        assert_eq!(eval1("1 - 2 - 3", "x", 0.0), -4.0);
        assert_eq!(eval1("8 / 4 / 2", "x", 0.0), 1.0);
        assert_eq!(eval1("1 + 2 * 3", "x", 0.0), 7.0);
        assert_eq!(eval1("--x", "x", 3.0), 3.0);
        assert_eq!(eval1("2*pi", "x", 0.0), 2.0 * std::f64::consts::PI);
        assert_eq!(eval1("1.5e2 + 2E-1", "x", 0.0), 150.2);
        assert_eq!(eval1("sqrt(abs(-16)) + log(exp(2))", "x", 0.0), 6.0);
    }

    #[test]
    fn checked_eval_rejects_domain_errors() {
        let e = Expression::parse("log(s)", &["s"]).unwrap();
        assert!(e.eval_checked(&[0.0]).is_err());
        assert!(e.eval_checked(&[-1.0]).is_err());
        assert!(e.eval_checked(&[1.0]).is_ok());
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (0.0f64..10.0).prop_map(|v| format!("{v}")),
            Just("x".to_string()),
            Just("y".to_string()),
            Just("pi".to_string()),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), prop::sample::select(vec!['+', '-', '*', '/']))
                    .prop_map(|(a, b, op)| format!("({a}) {op} ({b})")),
                inner.clone().prop_map(|a| format!("-({a})")),
                inner.clone().prop_map(|a| format!("({a})^2")),
                (inner, prop::sample::select(vec!["sin", "cos", "exp", "abs"]))
                    .prop_map(|(a, f)| format!("{f}(({a}) / 10)")),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(src in arb_expr(), pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 100)) {
            let e = Expression::parse(&src, &["x", "y"]).unwrap();
            let printed = e.to_string();
            let back = Expression::parse(&printed, &["x", "y"]).unwrap();
            for (x, y) in pts {
                let (a, b) = (e.eval(&[x, y]), back.eval(&[x, y]));
                if a.is_finite() {
                    prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300), "{src} vs {printed}: {a} {b}");
                } else {
                    prop_assert!(a.is_nan() == b.is_nan());
                }
            }
        }
    }
}
