//! Small expression language for potentials and Hamilton–Jacobi potentials.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?          right-associative
//! atom  := number | ident | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are `q1..qN` and `x1..xn`; functions are `sin cos exp sqrt log tanh`.

use std::fmt;

use thiserror::Error;

/// Identifier ranges an expression may refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub n: usize,
    pub fields: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// `x^μ`, zero-based.
    X(usize),
    /// `q^i`, zero-based.
    Q(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
            Func::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax { expected: Vec<String>, found: String },
    UnknownIdentifier(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax { expected, found } => {
                write!(f, "expected one of {{{}}}, found {found}", expected.join(", "))
            }
            ParseErrorKind::UnknownIdentifier(name) => write!(f, "unknown identifier `{name}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot evaluate `{expr}`: {reason}")]
pub struct EvalError {
    pub expr: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
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
                let text = &src[start..i];
                let value = text.parse::<f64>().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::Syntax {
                        expected: vec!["number".into()],
                        found: format!("`{text}`"),
                    },
                })?;
                out.push((start, Tok::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::Syntax {
                        expected: vec!["token".into()],
                        found: format!("`{ch}`"),
                    },
                });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    scope: &'a Scope,
}

const OPERAND: &[&str] = &["number", "identifier", "`(`", "`-`"];

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind: ParseErrorKind::Syntax {
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found: self.peek().describe(),
            },
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.error(&["`(`"]));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                resolve(&name, self.scope).map(Node::Var).ok_or(ParseError {
                    offset,
                    kind: ParseErrorKind::UnknownIdentifier(name),
                })
            }
            _ => Err(self.error(OPERAND)),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() != Tok::RParen {
            return Err(self.error(&["`)`", "operator"]));
        }
        self.bump();
        Ok(())
    }
}

fn resolve(name: &str, scope: &Scope) -> Option<Var> {
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    match head {
        "q" if k <= scope.fields => Some(Var::Q(k - 1)),
        "x" if k <= scope.n => Some(Var::X(k - 1)),
        _ => None,
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialExpr {
    source: String,
    scope: Scope,
    ast: Node,
}

/// Parse `source` against the identifiers allowed by `scope`.
pub fn parse_potential(source: &str, scope: Scope) -> Result<PotentialExpr, ParseError> {
    let toks = lex(source)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        scope: &scope,
    };
    let ast = parser.expr()?;
    if *parser.peek() != Tok::End {
        return Err(parser.error(&["operator", "end of input"]));
    }
    Ok(PotentialExpr {
        source: source.to_string(),
        scope,
        ast,
    })
}

impl PotentialExpr {
    pub fn from_node(ast: Node, scope: Scope) -> Self {
        let source = ast.to_string();
        Self { source, scope, ast }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    pub fn eval(&self, x: &[f64], q: &[f64]) -> Result<f64, EvalError> {
        eval_node(&self.ast, x, q).map_err(|reason| EvalError {
            expr: self.source.clone(),
            reason,
        })
    }

    /// Symbolic partial derivative.
    pub fn derivative(&self, var: Var) -> PotentialExpr {
        PotentialExpr::from_node(differentiate(&self.ast, var), self.scope)
    }
}

impl fmt::Display for PotentialExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ast)
    }
}

fn lookup(v: Var, x: &[f64], q: &[f64]) -> Result<f64, String> {
    let (slice, k, name) = match v {
        Var::X(k) => (x, k, "x"),
        Var::Q(k) => (q, k, "q"),
    };
    slice
        .get(k)
        .copied()
        .ok_or_else(|| format!("{name}{} not supplied", k + 1))
}

fn eval_node(node: &Node, x: &[f64], q: &[f64]) -> Result<f64, String> {
    let value = match node {
        Node::Num(v) => *v,
        Node::Var(v) => lookup(*v, x, q)?,
        Node::Neg(a) => -eval_node(a, x, q)?,
        Node::Bin(op, a, b) => {
            let (a, b) = (eval_node(a, x, q)?, eval_node(b, x, q)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err("division by zero".into());
                    }
                    a / b
                }
                BinOp::Pow => {
                    let r = a.powf(b);
                    if r.is_nan() {
                        return Err(format!("{a}^{b} is undefined"));
                    }
                    r
                }
            }
        }
        Node::Call(func, a) => {
            let a = eval_node(a, x, q)?;
            match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Tanh => a.tanh(),
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(format!("sqrt of negative value {a}"));
                    }
                    a.sqrt()
                }
                Func::Log => {
                    if a <= 0.0 {
                        return Err(format!("log of non-positive value {a}"));
                    }
                    a.ln()
                }
            }
        }
    };
    if !value.is_finite() {
        return Err(format!("non-finite intermediate value {value}"));
    }
    Ok(value)
}

fn num(v: f64) -> Node {
    Node::Num(v)
}

fn as_num(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        _ => None,
    }
}

fn add(a: Node, b: Node) -> Node {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x + y),
        (Some(z), _) if z == 0.0 => b,
        (_, Some(z)) if z == 0.0 => a,
        _ => Node::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x - y),
        (_, Some(z)) if z == 0.0 => a,
        (Some(z), _) if z == 0.0 => neg(b),
        _ => Node::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x * y),
        (Some(z), _) | (_, Some(z)) if z == 0.0 => num(0.0),
        (Some(o), _) if o == 1.0 => b,
        (_, Some(o)) if o == 1.0 => a,
        _ => Node::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (as_num(&a), as_num(&b)) {
        (Some(z), _) if z == 0.0 => num(0.0),
        (_, Some(o)) if o == 1.0 => a,
        _ => Node::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(v) => num(-v),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn pow(a: Node, b: Node) -> Node {
    match as_num(&b) {
        Some(z) if z == 0.0 => num(1.0),
        Some(o) if o == 1.0 => a,
        _ => Node::Bin(BinOp::Pow, Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Node) -> Node {
    Node::Call(f, Box::new(a))
}

fn depends_on(node: &Node, var: Var) -> bool {
    match node {
        Node::Num(_) => false,
        Node::Var(v) => *v == var,
        Node::Neg(a) | Node::Call(_, a) => depends_on(a, var),
        Node::Bin(_, a, b) => depends_on(a, var) || depends_on(b, var),
    }
}

fn differentiate(node: &Node, var: Var) -> Node {
    match node {
        Node::Num(_) => num(0.0),
        Node::Var(v) => num(if *v == var { 1.0 } else { 0.0 }),
        Node::Neg(a) => neg(differentiate(a, var)),
        Node::Bin(op, a, b) => {
            let (da, db) = (differentiate(a, var), differentiate(b, var));
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinOp::Add => add(da, db),
                BinOp::Sub => sub(da, db),
                BinOp::Mul => add(mul(da, b.clone()), mul(a, db)),
                BinOp::Div => div(
                    sub(mul(da, b.clone()), mul(a, db)),
                    pow(b, num(2.0)),
                ),
                BinOp::Pow => {
                    if !depends_on(&b, var) {
                        // d(u^c) = c u^(c−1) u'
                        let lowered = match as_num(&b) {
                            Some(c) => num(c - 1.0),
                            None => sub(b.clone(), num(1.0)),
                        };
                        mul(mul(b, pow(a, lowered)), da)
                    } else {
                        // d(u^v) = u^v (v' ln u + v u'/u)
                        let whole = pow(a.clone(), b.clone());
                        let inner = add(
                            mul(db, call(Func::Log, a.clone())),
                            div(mul(b, da), a),
                        );
                        mul(whole, inner)
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let da = differentiate(a, var);
            let a = (**a).clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, a),
                Func::Cos => neg(call(Func::Sin, a)),
                Func::Exp => call(Func::Exp, a),
                Func::Sqrt => div(num(0.5), call(Func::Sqrt, a)),
                Func::Log => div(num(1.0), a),
                Func::Tanh => sub(num(1.0), pow(call(Func::Tanh, a), num(2.0))),
            };
            mul(outer, da)
        }
    }
}

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Neg(_) => 3,
        Node::Bin(BinOp::Pow, ..) => 4,
        Node::Num(v) if *v < 0.0 => 3,
        _ => 5,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Node, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v}"),
            Node::Var(Var::X(k)) => write!(f, "x{}", k + 1),
            Node::Var(Var::Q(k)) => write!(f, "q{}", k + 1),
            Node::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, precedence(a) < 3)
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
            Node::Bin(op, a, b) => {
                let p = precedence(self);
                let (sym, left_parens, right_parens) = match op {
                    BinOp::Add => ("+", precedence(a) < p, precedence(b) <= p),
                    BinOp::Sub => ("-", precedence(a) < p, precedence(b) <= p),
                    BinOp::Mul => ("*", precedence(a) < p, precedence(b) <= p),
                    BinOp::Div => ("/", precedence(a) < p, precedence(b) <= p),
                    BinOp::Pow => ("^", precedence(a) <= p, precedence(b) < 3),
                };
                write_child(f, a, left_parens)?;
                f.write_str(sym)?;
                write_child(f, b, right_parens)
            }
        }
    }
}
