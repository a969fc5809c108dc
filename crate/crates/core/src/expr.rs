//! Arithmetic expression language used for drifts, impulsive vector fields,
//! input segments and cost terms.
//!
//! Expressions are parsed into an immutable tree over the variables `t`, `k`,
//! `x1..xn`, `u1..um` and `v1..vl`. Trees can be evaluated in IEEE double
//! arithmetic and differentiated symbolically; the derivative trees are
//! lightly simplified (constant folding and 0/1 identities only).
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          (right associative)
//! primary := number | 'pi' | variable | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log | abs | sqrt
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("function `{name}` expects 1 argument, got {got} (position {pos})")]
    Arity { pos: usize, name: String, got: usize },
    #[error("variable {0} is not bound in this context")]
    Unbound(Var),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{op} of negative argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("non-finite result")]
    NonFinite,
    #[error("cannot differentiate `{0}` with respect to {1}")]
    UnsupportedDerivative(&'static str, Var),
}

/// A variable reference. Indices are zero based; display is one based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    K,
    X(usize),
    U(usize),
    V(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::K => write!(f, "k"),
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
            Var::V(i) => write!(f, "v{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    /// Signum with `sign(0) = 0`; produced by almost-everywhere derivatives of `abs`.
    Sign,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sign => "sign",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "abs" => UnaryOp::Abs,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Variable assignment used by [`Expr::eval`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<'a> {
    pub t: Option<f64>,
    pub k: Option<f64>,
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn time(t: f64) -> Self {
        Env { t: Some(t), ..Default::default() }
    }

    pub fn state(x: &'a [f64]) -> Self {
        Env { x, ..Default::default() }
    }

    fn get(&self, var: Var) -> Result<f64, ExprError> {
        let value = match var {
            Var::T => self.t,
            Var::K => self.k,
            Var::X(i) => self.x.get(i).copied(),
            Var::U(i) => self.u.get(i).copied(),
            Var::V(i) => self.v.get(i).copied(),
        };
        value.ok_or(ExprError::Unbound(var))
    }
}

/// Which variables an expression may reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Scope {
    pub t: bool,
    pub k: bool,
    pub n: usize,
    pub m: usize,
    pub l: usize,
}

impl Scope {
    pub fn admits(&self, var: Var) -> bool {
        match var {
            Var::T => self.t,
            Var::K => self.k,
            Var::X(i) => i < self.n,
            Var::U(i) => i < self.m,
            Var::V(i) => i < self.l,
        }
    }
}

/// Parse `source` into an expression tree.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0, end: source.len() };
    let expr = parser.expr()?;
    match parser.peek() {
        None => Ok(expr),
        Some((pos, tok)) => Err(ExprError::Syntax {
            pos,
            msg: format!("unexpected {tok}"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "number {v}"),
            Token::Ident(s) => write!(f, "identifier `{s}`"),
            Token::Op(c) => write!(f, "`{c}`"),
            Token::LParen => write!(f, "`(`"),
            Token::RParen => write!(f, "`)`"),
            Token::Comma => write!(f, "`,`"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
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
            let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })?;
            if !value.is_finite() {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: format!("number `{text}` overflows"),
                });
            }
            out.push((start, Token::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Ident(src[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Token::Op(c),
                '(' => Token::LParen,
                ')' => Token::RParen,
                ',' => Token::Comma,
                _ => {
                    return Err(ExprError::Syntax {
                        pos: start,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((start, tok));
            i += c.len_utf8();
        }
    }
    Ok(out)
}

fn parse_variable(name: &str) -> Option<Var> {
    match name {
        "t" => return Some(Var::T),
        "k" => return Some(Var::K),
        _ => {}
    }
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    let index = index - 1;
    match head {
        "x" => Some(Var::X(index)),
        "u" => Some(Var::U(index)),
        "v" => Some(Var::V(index)),
        _ => None,
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<(usize, &Token)> {
        self.tokens.get(self.pos).map(|(p, t)| (*p, t))
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        if let Some((_, Token::Op(c))) = self.peek() {
            if ops.contains(c) {
                let c = *c;
                self.pos += 1;
                return Some(c);
            }
        }
        None
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if op == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat_op(&['-']).is_some() {
            let inner = self.unary()?;
            // negative literals are kept as literals so that printing and
            // re-parsing reproduces the same tree
            return Ok(match inner {
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let pos = self.here();
        let Some((_, tok)) = self.peek() else {
            return Err(ExprError::Syntax { pos, msg: "unexpected end of input".into() });
        };
        match tok.clone() {
            Token::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Token::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => {
                self.pos += 1;
                if let Some((_, Token::LParen)) = self.peek() {
                    self.pos += 1;
                    let op = UnaryOp::from_name(&name)
                        .ok_or_else(|| ExprError::UnknownIdentifier { pos, name: name.clone() })?;
                    let mut args = Vec::new();
                    if !matches!(self.peek(), Some((_, Token::RParen))) {
                        args.push(self.expr()?);
                        while let Some((_, Token::Comma)) = self.peek() {
                            self.pos += 1;
                            args.push(self.expr()?);
                        }
                    }
                    self.expect_rparen()?;
                    if args.len() != 1 {
                        return Err(ExprError::Arity { pos, name, got: args.len() });
                    }
                    let arg = args.pop().expect("one argument");
                    return Ok(Expr::Unary(op, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                if UnaryOp::from_name(&name).is_some() {
                    return Err(ExprError::Arity { pos, name, got: 0 });
                }
                parse_variable(&name)
                    .map(Expr::Var)
                    .ok_or(ExprError::UnknownIdentifier { pos, name })
            }
            other => Err(ExprError::Syntax { pos, msg: format!("unexpected {other}") }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Some((_, Token::RParen)) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(ExprError::Syntax { pos: self.here(), msg: "expected `)`".into() }),
        }
    }
}

/// Fully parenthesised rendering; `parse(&e.to_string())` reproduces `e`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{})", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(var) => write!(f, "{var}"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<f64, ExprError> {
        let value = match self {
            Expr::Num(v) => *v,
            Expr::Var(var) => env.get(*var)?,
            Expr::Unary(op, a) => {
                let a = a.eval(env)?;
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Sign => {
                        if a == 0.0 {
                            0.0
                        } else {
                            a.signum()
                        }
                    }
                    UnaryOp::Log => {
                        if a < 0.0 {
                            return Err(ExprError::Domain { op: "log", arg: a });
                        }
                        a.ln()
                    }
                    UnaryOp::Sqrt => {
                        if a < 0.0 {
                            return Err(ExprError::Domain { op: "sqrt", arg: a });
                        }
                        a.sqrt()
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        a / b
                    }
                    BinaryOp::Pow => pow(a, b),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    /// Visit every variable occurring in the tree.
    pub fn for_each_var(&self, visit: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => visit(*v),
            Expr::Unary(_, a) => a.for_each_var(visit),
            Expr::Binary(_, a, b) => {
                a.for_each_var(visit);
                b.for_each_var(visit);
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        let mut found = false;
        self.for_each_var(&mut |v| found |= v == var);
        found
    }

    /// First variable outside `scope`, if any.
    pub fn first_out_of_scope(&self, scope: &Scope) -> Option<Var> {
        let mut bad = None;
        self.for_each_var(&mut |v| {
            if bad.is_none() && !scope.admits(v) {
                bad = Some(v);
            }
        });
        bad
    }

    /// Replace every occurrence of `var` by the literal `value`.
    pub fn bind(&self, var: Var, value: f64) -> Expr {
        self.substitute(var, &Expr::Num(value))
    }

    /// Replace every occurrence of `var` by `replacement`.
    pub fn substitute(&self, var: Var, replacement: &Expr) -> Expr {
        match self {
            Expr::Var(v) if *v == var => replacement.clone(),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.substitute(var, replacement))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.substitute(var, replacement)),
                Box::new(b.substitute(var, replacement)),
            ),
        }
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Result<Expr, ExprError> {
        self.derive(var, false)
    }

    /// Derivative valid almost everywhere: `abs(g)' = sign(g) g'`.
    pub fn differentiate_ae(&self, var: Var) -> Result<Expr, ExprError> {
        self.derive(var, true)
    }

    fn derive(&self, var: Var, ae: bool) -> Result<Expr, ExprError> {
        Ok(match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                if !a.depends_on(var) {
                    return Ok(Expr::Num(0.0));
                }
                let da = a.derive(var, ae)?;
                let a = (**a).clone();
                match op {
                    UnaryOp::Neg => neg(da),
                    UnaryOp::Sin => mul(unary(UnaryOp::Cos, a), da),
                    UnaryOp::Cos => neg(mul(unary(UnaryOp::Sin, a), da)),
                    UnaryOp::Exp => mul(unary(UnaryOp::Exp, a), da),
                    UnaryOp::Log => div(da, a),
                    UnaryOp::Sqrt => div(da, mul(Expr::Num(2.0), unary(UnaryOp::Sqrt, a))),
                    UnaryOp::Abs if ae => mul(unary(UnaryOp::Sign, a), da),
                    UnaryOp::Sign if ae => Expr::Num(0.0),
                    UnaryOp::Abs | UnaryOp::Sign => return Err(ExprError::UnsupportedDerivative(op.name(), var)),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.derive(var, ae)?;
                let db = b.derive(var, ae)?;
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinaryOp::Add => add(da, db),
                    BinaryOp::Sub => sub(da, db),
                    BinaryOp::Mul => add(mul(da, b.clone()), mul(a, db)),
                    BinaryOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), pow_expr(b, Expr::Num(2.0))),
                    BinaryOp::Pow => {
                        if !b.depends_on(var) {
                            // d(a^c) = c a^(c-1) da
                            let lowered = sub(b.clone(), Expr::Num(1.0));
                            mul(mul(b, pow_expr(a, lowered)), da)
                        } else if !a.depends_on(var) {
                            mul(mul(pow_expr(a.clone(), b), unary(UnaryOp::Log, a)), db)
                        } else {
                            let inner = add(mul(db, unary(UnaryOp::Log, a.clone())), div(mul(b.clone(), da), a.clone()));
                            mul(pow_expr(a, b), inner)
                        }
                    }
                }
            }
        })
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == 2.0 {
        a * a
    } else if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Unary(UnaryOp::Neg, inner) => *inner,
        other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
    }
}

fn unary(op: UnaryOp, a: Expr) -> Expr {
    Expr::Unary(op, Box::new(a))
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        _ if is_num(&a, 0.0) => b,
        _ if is_num(&b, 0.0) => a,
        _ => Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        _ if is_num(&b, 0.0) => a,
        _ if is_num(&a, 0.0) => neg(b),
        _ => Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        _ if is_num(&a, 0.0) || is_num(&b, 0.0) => Expr::Num(0.0),
        _ if is_num(&a, 1.0) => b,
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) if *y != 0.0 => Expr::Num(x / y),
        _ if is_num(&a, 0.0) => Expr::Num(0.0),
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
    }
}

fn pow_expr(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&b, 0.0) => Expr::Num(1.0),
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Binary(BinaryOp::Pow, Box::new(a), Box::new(b)),
    }
}

/// A list of `n` component expressions, one per state coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Expr>,
}

impl VectorField {
    pub fn new(components: Vec<Expr>) -> Self {
        VectorField { components }
    }

    pub fn parse(sources: &[&str]) -> Result<Self, ExprError> {
        sources.iter().map(|s| parse(s)).collect::<Result<_, _>>().map(Self::new)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<Vec<f64>, ExprError> {
        self.components.iter().map(|c| c.eval(env)).collect()
    }

    pub fn eval_into(&self, env: &Env<'_>, out: &mut [f64]) -> Result<(), ExprError> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(env)?;
        }
        Ok(())
    }

    /// `true` when every component references state variables only.
    pub fn is_state_only(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.first_out_of_scope(&Scope { n: usize::MAX, ..Default::default() }).is_none())
    }

    /// Symbolic Jacobian with respect to `x1..xn`, row major.
    pub fn jacobian(&self, n: usize) -> Result<Vec<Vec<Expr>>, ExprError> {
        self.components
            .iter()
            .map(|c| (0..n).map(|j| c.differentiate(Var::X(j))).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        parse(src).unwrap().eval(&Env { x, ..Env::time(0.0) }).unwrap()
    }

    #[test]
    fn parses_single_variable() {
        assert_eq!(parse("x4").unwrap(), Expr::Var(Var::X(3)));
    }

    #[test]
    fn precedence_rules() {
        // unary minus binds looser than ^
        assert_eq!(ev("-2^2", &[]), -4.0);
        assert_eq!(ev("2^3^2", &[]), 512.0);
        assert_eq!(ev("1+2*3", &[]), 7.0);
        assert_eq!(ev("2*-3", &[]), -6.0);
        assert_eq!(ev("2^-1", &[]), 0.5);
        assert_eq!(ev("(1+2)*3", &[]), 9.0);
        assert_eq!(ev("8/2/2", &[]), 2.0);
        assert_eq!(ev("1-2-3", &[]), -4.0);
    }

    #[test]
    fn cost_term_evaluates_to_zero_at_initial_state() {
        let h = parse("(x3-x5)^2 + x1^2 + x2^2").unwrap();
        let x = [0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(h.eval(&Env::state(&x)).unwrap(), 0.0);
    }

    #[test]
    fn family_parameter() {
        let e = parse("sin(k*t)/sqrt(k)").unwrap();
        let env = Env { t: Some(0.0), k: Some(4.0), ..Default::default() };
        assert_eq!(e.eval(&env).unwrap(), 0.0);
    }

    #[test]
    fn literal_and_linear_combination() {
        assert_eq!(ev("3.5", &[]), 3.5);
        assert_eq!(ev("x2*1 - x1*0", &[2.0, 5.0]), 5.0);
        assert_eq!(ev("1.5e2 + 2E-1", &[]), 150.2);
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse("x1 + * 2") {
            Err(ExprError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("(x1"), Err(ExprError::Syntax { pos: 3, .. })));
        assert!(matches!(parse("x1 $"), Err(ExprError::Syntax { pos: 3, .. })));
        assert!(matches!(parse(""), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn unknown_identifiers_and_arity() {
        assert!(matches!(parse("y + 1"), Err(ExprError::UnknownIdentifier { pos: 0, .. })));
        assert!(matches!(parse("x0"), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse("tan(t)"), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse("sin(t, t)"), Err(ExprError::Arity { got: 2, .. })));
        assert!(matches!(parse("sin()"), Err(ExprError::Arity { got: 0, .. })));
        assert!(matches!(parse("sin + 1"), Err(ExprError::Arity { got: 0, .. })));
    }

    #[test]
    fn evaluation_errors() {
        let env = Env::state(&[0.0, -1.0]);
        assert_eq!(parse("1/x1").unwrap().eval(&env), Err(ExprError::DivisionByZero));
        assert!(matches!(parse("sqrt(x2)").unwrap().eval(&env), Err(ExprError::Domain { op: "sqrt", .. })));
        assert!(matches!(parse("log(x2)").unwrap().eval(&env), Err(ExprError::Domain { op: "log", .. })));
        assert_eq!(parse("log(x1)").unwrap().eval(&env), Err(ExprError::NonFinite));
        assert_eq!(parse("exp(1000)").unwrap().eval(&env), Err(ExprError::NonFinite));
        assert_eq!(parse("x3").unwrap().eval(&env), Err(ExprError::Unbound(Var::X(2))));
        assert_eq!(parse("t").unwrap().eval(&env), Err(ExprError::Unbound(Var::T)));
    }

    #[test]
    fn derivative_examples() {
        let d = parse("x4").unwrap().differentiate(Var::X(3)).unwrap();
        assert_eq!(d, Expr::Num(1.0));

        let h = parse("(x3-x5)^2 + x1^2 + x2^2").unwrap();
        let d = h.differentiate(Var::X(0)).unwrap();
        for x1 in [-1.5, 0.0, 2.25] {
            let x = [x1, 0.3, 0.7, 0.0, 0.1, 0.0];
            assert_eq!(d.eval(&Env::state(&x)).unwrap(), 2.0 * x1);
        }

        let g1 = VectorField::parse(&["1", "0", "x2", "0", "0", "0"]).unwrap();
        let jac = g1.jacobian(6).unwrap();
        assert_eq!(jac[2][1], Expr::Num(1.0));
        assert_eq!(jac[2][0], Expr::Num(0.0));
    }

    #[test]
    fn abs_is_not_differentiable() {
        let e = parse("abs(x1) + x2").unwrap();
        assert!(matches!(e.differentiate(Var::X(0)), Err(ExprError::UnsupportedDerivative("abs", _))));
        // independent of the variable: fine
        assert_eq!(e.differentiate(Var::X(1)).unwrap(), Expr::Num(1.0));
    }

    #[test]
    fn display_round_trips() {
        for src in ["-x1^2", "2^-1", "sin(k*t)/sqrt(k)", "-(x1+x2)*3", "(-2)^2", "-0", "pi*t", "1e-300"] {
            let e = parse(src).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
    }

    #[test]
    fn scope_checks() {
        let e = parse("x1 + u2").unwrap();
        let scope = Scope { n: 1, m: 1, ..Default::default() };
        assert_eq!(e.first_out_of_scope(&scope), Some(Var::U(1)));
        let scope = Scope { n: 1, m: 2, ..Default::default() };
        assert_eq!(e.first_out_of_scope(&scope), None);
        assert!(!VectorField::parse(&["x1", "u1"]).unwrap().is_state_only());
        assert!(VectorField::parse(&["x1", "x7"]).unwrap().is_state_only());
    }
}
