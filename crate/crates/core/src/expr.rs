//! Scalar expression fields over named real variables.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?
//! atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//! ```
//!
//! Evaluation is generic over [`Scalar`], so the same tree yields values,
//! first directional derivatives (`Dual<f64>`) and mixed second derivatives
//! (`Dual<Dual<f64>>`).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::dual::{Dual, Scalar};
use crate::error::{DomainKind, EvalError, ParseError, ParseErrorKind, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    /// `const_exp` caches the exponent's value when it has no free variables.
    Pow {
        base: Box<Node>,
        exp: Box<Node>,
        const_exp: Option<f64>,
    },
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    kind: Kind,
    span: Span,
}

/// A parsed expression bound to a declared list of variable names.
#[derive(Clone)]
pub struct Expr {
    root: Node,
    vars: Arc<[String]>,
    source: Arc<str>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

/// Named variable assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Env(BTreeMap<String, f64>);

impl Env {
    pub fn new() -> Self {
        Env(BTreeMap::new())
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Env {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Env(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

/// Variable names `prefix1 .. prefixN`.
pub fn indexed_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

impl Expr {
    /// Parse `text` with the given declared variables.
    pub fn parse<S: AsRef<str>>(text: &str, variables: &[S]) -> Result<Expr, ParseError> {
        let vars: Arc<[String]> = variables.iter().map(|s| s.as_ref().to_string()).collect();
        Self::parse_shared(text, vars)
    }

    pub(crate) fn parse_shared(text: &str, vars: Arc<[String]>) -> Result<Expr, ParseError> {
        let tokens = lex(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            vars: &vars,
            text_len: text.len(),
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ParseError {
                kind: ParseErrorKind::Unexpected { found: tok.describe() },
                offset: tok.span.start,
            });
        }
        Ok(Expr {
            root,
            vars,
            source: Arc::from(text),
        })
    }

    /// Constant expression with the given variable list.
    pub fn constant<S: AsRef<str>>(value: f64, variables: &[S]) -> Expr {
        let vars: Arc<[String]> = variables.iter().map(|s| s.as_ref().to_string()).collect();
        let text = Kind::Num(value);
        let root = Node {
            kind: text,
            span: Span::default(),
        };
        let source: Arc<str> = Arc::from(format_number(value).as_str());
        Expr { root, vars, source }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Names of the declared variables that actually occur in the tree.
    pub fn free_variables(&self) -> Vec<&str> {
        let mut used = vec![false; self.vars.len()];
        mark_vars(&self.root, &mut used);
        self.vars
            .iter()
            .zip(used)
            .filter(|(_, u)| *u)
            .map(|(v, _)| v.as_str())
            .collect()
    }

    pub fn is_constant(&self) -> bool {
        self.free_variables().is_empty()
    }

    /// Evaluate at values given in declared-variable order.
    pub fn eval_at<T: Scalar>(&self, values: &[T]) -> Result<T, EvalError> {
        assert_eq!(
            values.len(),
            self.vars.len(),
            "expression `{self}` expects {} values",
            self.vars.len()
        );
        self.eval_node(&self.root, values)
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        let values = self.bind(env, false)?;
        self.eval_at(&values)
    }

    /// Value and exact directional derivative along `seed`. Variables
    /// missing from `seed` get a zero seed component.
    pub fn directional(&self, env: &Env, seed: &Env) -> Result<(f64, f64), EvalError> {
        let x = self.bind(env, false)?;
        let dir = self.bind(seed, true)?;
        self.directional_at(&x, &dir)
    }

    pub fn directional_at(&self, x: &[f64], dir: &[f64]) -> Result<(f64, f64), EvalError> {
        let v = self.eval_at(&crate::dual::seed(x, dir))?;
        Ok((v.re, v.eps))
    }

    /// Exact mixed second directional derivative `D²e(x)[seed1, seed2]`.
    pub fn second_directional(&self, env: &Env, seed1: &Env, seed2: &Env) -> Result<f64, EvalError> {
        let x = self.bind(env, false)?;
        let s1 = self.bind(seed1, true)?;
        let s2 = self.bind(seed2, true)?;
        self.second_directional_at(&x, &s1, &s2)
    }

    pub fn second_directional_at(&self, x: &[f64], seed1: &[f64], seed2: &[f64]) -> Result<f64, EvalError> {
        let point: Vec<Dual<Dual<f64>>> = x
            .iter()
            .zip(seed1.iter().zip(seed2))
            .map(|(&xi, (&a, &b))| Dual::new(Dual::new(xi, b), Dual::new(a, 0.0)))
            .collect();
        Ok(self.eval_at(&point)?.eps.eps)
    }

    /// All first partial derivatives at `x`, in declared order.
    pub fn gradient_at<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
        (0..x.len())
            .map(|i| {
                let p: Vec<Dual<T>> = x
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| Dual::new(v, if k == i { T::one() } else { T::zero() }))
                    .collect();
                Ok(self.eval_at(&p)?.eps)
            })
            .collect()
    }

    fn bind(&self, env: &Env, zero_default: bool) -> Result<Vec<f64>, EvalError> {
        self.vars
            .iter()
            .map(|name| match env.get(name) {
                Some(v) => Ok(v),
                None if zero_default => Ok(0.0),
                None if !self.uses(name) => Ok(0.0),
                None => Err(EvalError::Unbound(name.clone())),
            })
            .collect()
    }

    fn uses(&self, name: &str) -> bool {
        self.free_variables().contains(&name)
    }

    fn domain(&self, kind: DomainKind, span: Span) -> EvalError {
        let text = self
            .source
            .get(span.start..span.end)
            .unwrap_or(&self.source)
            .to_string();
        EvalError::Domain { kind, span, text }
    }

    fn eval_node<T: Scalar>(&self, node: &Node, x: &[T]) -> Result<T, EvalError> {
        Ok(match &node.kind {
            Kind::Num(v) => T::constant(*v),
            Kind::Var(i) => x[*i],
            Kind::Neg(a) => -self.eval_node(a, x)?,
            Kind::Bin(op, a, b) => {
                let l = self.eval_node(a, x)?;
                let r = self.eval_node(b, x)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r.value() == 0.0 {
                            return Err(self.domain(DomainKind::DivisionByZero, node.span));
                        }
                        l / r
                    }
                }
            }
            Kind::Pow { base, exp, const_exp } => {
                let b = self.eval_node(base, x)?;
                match const_exp {
                    Some(c) if c.fract() == 0.0 && c.abs() <= f64::from(i32::MAX) => {
                        if b.value() == 0.0 && *c < 0.0 {
                            return Err(self.domain(DomainKind::ZeroToNegativePower, node.span));
                        }
                        b.powi(*c as i32)
                    }
                    Some(c) => {
                        if b.value() < 0.0 {
                            return Err(self.domain(DomainKind::NegativeBasePower, node.span));
                        }
                        b.powf(*c)
                    }
                    None => {
                        // Variable exponent: only defined through exp(e·ln b).
                        if b.value() <= 0.0 {
                            return Err(self.domain(DomainKind::NegativeBasePower, node.span));
                        }
                        let e = self.eval_node(exp, x)?;
                        (e * b.ln()).exp()
                    }
                }
            }
            Kind::Call(f, a) => {
                let v = self.eval_node(a, x)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Tanh => v.tanh(),
                    Func::Log => {
                        if v.value() <= 0.0 {
                            return Err(self.domain(DomainKind::LogNonPositive, node.span));
                        }
                        v.ln()
                    }
                    Func::Sqrt => {
                        if v.value() < 0.0 {
                            return Err(self.domain(DomainKind::SqrtNegative, node.span));
                        }
                        v.sqrt()
                    }
                }
            }
        })
    }

    fn fmt_node(&self, node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &node.kind {
            Kind::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{})", format_number(-v))
                } else {
                    f.write_str(&format_number(*v))
                }
            }
            Kind::Var(i) => f.write_str(&self.vars[*i]),
            Kind::Neg(a) => {
                f.write_str("-")?;
                self.fmt_child(a, f)
            }
            Kind::Bin(op, a, b) => {
                self.fmt_child(a, f)?;
                write!(f, " {} ", op.symbol())?;
                self.fmt_child(b, f)
            }
            Kind::Pow { base, exp, .. } => {
                self.fmt_child(base, f)?;
                f.write_str("^")?;
                self.fmt_child(exp, f)
            }
            Kind::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                self.fmt_node(a, f)?;
                f.write_str(")")
            }
        }
    }

    fn fmt_child(&self, node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atomic = match &node.kind {
            Kind::Num(v) => !v.is_sign_negative(),
            Kind::Var(_) | Kind::Call(..) => true,
            _ => false,
        };
        if atomic {
            self.fmt_node(node, f)
        } else {
            f.write_str("(")?;
            self.fmt_node(node, f)?;
            f.write_str(")")
        }
    }
}

/// Prints a tree that reparses to the same structure.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_node(&self.root, f)
    }
}

/// Shortest representation that round-trips through `str::parse::<f64>`.
fn format_number(v: f64) -> String {
    format!("{v:?}")
}

fn mark_vars(node: &Node, used: &mut [bool]) {
    match &node.kind {
        Kind::Num(_) => {}
        Kind::Var(i) => used[*i] = true,
        Kind::Neg(a) | Kind::Call(_, a) => mark_vars(a, used),
        Kind::Bin(_, a, b) | Kind::Pow { base: a, exp: b, .. } => {
            mark_vars(a, used);
            mark_vars(b, used);
        }
    }
}

fn has_vars(node: &Node) -> bool {
    match &node.kind {
        Kind::Num(_) => false,
        Kind::Var(_) => true,
        Kind::Neg(a) | Kind::Call(_, a) => has_vars(a),
        Kind::Bin(_, a, b) | Kind::Pow { base: a, exp: b, .. } => has_vars(a) || has_vars(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

impl Token {
    fn describe(&self) -> String {
        match &self.tok {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
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
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::BadNumber(s.to_string()),
                offset: start,
            })?;
            if !v.is_finite() {
                return Err(ParseError {
                    kind: ParseErrorKind::BadNumber(s.to_string()),
                    offset: start,
                });
            }
            out.push(Token {
                tok: Tok::Num(v),
                span: Span::new(start, i),
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                span: Span::new(start, i),
            });
        } else if b"+-*/^(),".contains(&c) {
            out.push(Token {
                tok: Tok::Sym(c as char),
                span: Span::new(i, i + 1),
            });
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(ParseError {
                kind: ParseErrorKind::Unexpected {
                    found: format!("character `{ch}`"),
                },
                offset: i,
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [String],
    text_len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_sym(&self) -> Option<char> {
        match self.peek() {
            Some(Token { tok: Tok::Sym(c), .. }) => Some(*c),
            _ => None,
        }
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        let tok = self.tokens.get(self.pos).cloned().ok_or(ParseError {
            kind: ParseErrorKind::UnexpectedEnd,
            offset: self.text_len,
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, sym: char) -> Result<Span, ParseError> {
        let tok = self.next()?;
        if tok.tok == Tok::Sym(sym) {
            Ok(tok.span)
        } else {
            Err(ParseError {
                kind: ParseErrorKind::Unexpected { found: tok.describe() },
                offset: tok.span.start,
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        if self.peek_sym() == Some('-') {
            let start = self.next()?.span;
            let inner = self.factor()?;
            let span = start.join(inner.span);
            return Ok(Node {
                kind: Kind::Neg(Box::new(inner)),
                span,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            let exp = self.factor()?;
            let span = base.span.join(exp.span);
            let const_exp = if has_vars(&exp) { None } else { const_value(&exp) };
            return Ok(Node {
                kind: Kind::Pow {
                    base: Box::new(base),
                    exp: Box::new(exp),
                    const_exp,
                },
                span,
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let tok = self.next()?;
        match tok.tok {
            Tok::Num(v) => Ok(Node {
                kind: Kind::Num(v),
                span: tok.span,
            }),
            Tok::Sym('(') => {
                let inner = self.expr()?;
                let close = self.expect(')')?;
                Ok(Node {
                    kind: inner.kind,
                    span: tok.span.join(close),
                })
            }
            Tok::Ident(name) => {
                if self.peek_sym() == Some('(') {
                    let func = Func::from_name(&name).ok_or(ParseError {
                        kind: ParseErrorKind::UnknownFunction(name.clone()),
                        offset: tok.span.start,
                    })?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek_sym() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    let close = self.expect(')')?;
                    if args.len() != 1 {
                        return Err(ParseError {
                            kind: ParseErrorKind::Arity {
                                func: name,
                                expected: 1,
                                found: args.len(),
                            },
                            offset: tok.span.start,
                        });
                    }
                    let arg = args.pop().expect("one argument");
                    return Ok(Node {
                        kind: Kind::Call(func, Box::new(arg)),
                        span: tok.span.join(close),
                    });
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Node {
                        kind: Kind::Var(i),
                        span: tok.span,
                    }),
                    None => Err(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(name),
                        offset: tok.span.start,
                    }),
                }
            }
            _ => Err(ParseError {
                kind: ParseErrorKind::Unexpected { found: tok.describe() },
                offset: tok.span.start,
            }),
        }
    }
}

fn binary(op: BinOp, lhs: Node, rhs: Node) -> Node {
    let span = lhs.span.join(rhs.span);
    Node {
        kind: Kind::Bin(op, Box::new(lhs), Box::new(rhs)),
        span,
    }
}

/// Value of a variable-free subtree, or `None` if it hits a domain error.
fn const_value(node: &Node) -> Option<f64> {
    let probe = Expr {
        root: node.clone(),
        vars: Arc::from(Vec::<String>::new()),
        source: Arc::from(""),
    };
    probe.eval_at::<f64>(&[]).ok().filter(|v| v.is_finite())
}
