//! Coefficient expression language.
//!
//! Expressions are infix formulas over the two independent variables `x`
//! and `t`: numeric literals, `+ - * /`, integer powers `^k`, unary minus and
//! the functions `sin`, `cos`, `exp`. Precedence from tightest to loosest is
//! `^`, unary `-`, `* /`, `+ -`; binary operators of equal precedence
//! associate to the left.
//!
//! The printer emits a fully parenthesized form that parses back to the same
//! tree, and [`Expr::differentiate`] returns the exact symbolic derivative
//! with constant folding as the only simplification.

use std::fmt;

use thiserror::Error;

/// Independent variable of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// Base raised to an integer exponent.
    Pow(Box<Expr>, i32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("exponent at byte {offset} is not an integer literal")]
    NonIntegerExponent { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at (x={x}, t={t})")]
    DivisionByZero { x: f64, t: f64 },
    #[error("non-finite value at (x={x}, t={t})")]
    NonFinite { x: f64, t: f64 },
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn x() -> Self {
        Expr::Var(Var::X)
    }

    pub fn t() -> Self {
        Expr::Var(Var::T)
    }

    pub fn parse(src: &str) -> Result<Self, ParseError> {
        parse_expression(src)
    }

    /// True for the literal zero; operator code uses this to skip quadrature.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// True if the expression does not mention `var`.
    pub fn is_independent_of(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(v) => *v != var,
            Expr::Unary(_, e) | Expr::Pow(e, _) => e.is_independent_of(var),
            Expr::Binary(_, l, r) => l.is_independent_of(var) && r.is_independent_of(var),
        }
    }

    /// Checked evaluation. Division by zero and non-finite results are errors.
    pub fn eval(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        let v = self.eval_checked(x, t)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { x, t })
        }
    }

    fn eval_checked(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::T) => t,
            Expr::Unary(op, e) => {
                let v = e.eval_checked(x, t)?;
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Sin => v.sin(),
                    UnaryOp::Cos => v.cos(),
                    UnaryOp::Exp => v.exp(),
                }
            }
            Expr::Binary(op, l, r) => {
                let a = l.eval_checked(x, t)?;
                let b = r.eval_checked(x, t)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero { x, t });
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(e, k) => {
                let v = e.eval_checked(x, t)?;
                if *k < 0 && v == 0.0 {
                    return Err(EvalError::DivisionByZero { x, t });
                }
                v.powi(*k)
            }
        })
    }

    /// Unchecked evaluation for hot loops over validated coefficients.
    #[inline]
    pub fn value(&self, x: f64, t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::T) => t,
            Expr::Unary(op, e) => {
                let v = e.value(x, t);
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Sin => v.sin(),
                    UnaryOp::Cos => v.cos(),
                    UnaryOp::Exp => v.exp(),
                }
            }
            Expr::Binary(op, l, r) => {
                let a = l.value(x, t);
                let b = r.value(x, t);
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                }
            }
            Expr::Pow(e, k) => e.value(x, t).powi(*k),
        }
    }

    /// Exact symbolic derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, e) => {
                let de = e.differentiate(var);
                match op {
                    UnaryOp::Neg => neg(de),
                    UnaryOp::Sin => mul(unary(UnaryOp::Cos, (**e).clone()), de),
                    UnaryOp::Cos => neg(mul(unary(UnaryOp::Sin, (**e).clone()), de)),
                    UnaryOp::Exp => mul(unary(UnaryOp::Exp, (**e).clone()), de),
                }
            }
            Expr::Binary(op, l, r) => {
                let dl = l.differentiate(var);
                let dr = r.differentiate(var);
                match op {
                    BinaryOp::Add => add(dl, dr),
                    BinaryOp::Sub => sub(dl, dr),
                    BinaryOp::Mul => add(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                    BinaryOp::Div => div(
                        sub(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                        pow((**r).clone(), 2),
                    ),
                }
            }
            Expr::Pow(e, k) => {
                let de = e.differentiate(var);
                mul(
                    mul(Expr::Const(f64::from(*k)), pow((**e).clone(), k - 1)),
                    de,
                )
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, e) | Expr::Pow(e, _) => 1 + e.size(),
            Expr::Binary(_, l, r) => 1 + l.size() + r.size(),
        }
    }
}

// Smart constructors: constant folding and the 0/1 identities only.

pub fn neg(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        e => Expr::Unary(UnaryOp::Neg, Box::new(e)),
    }
}

pub fn unary(op: UnaryOp, e: Expr) -> Expr {
    match (op, &e) {
        (UnaryOp::Neg, _) => neg(e),
        (UnaryOp::Sin, Expr::Const(c)) => Expr::Const(c.sin()),
        (UnaryOp::Cos, Expr::Const(c)) => Expr::Const(c.cos()),
        (UnaryOp::Exp, Expr::Const(c)) => Expr::Const(c.exp()),
        _ => Expr::Unary(op, Box::new(e)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if a.is_zero() || b.is_zero() => Expr::Const(0.0),
        (Expr::Const(c), _) if *c == 1.0 => b,
        (_, Expr::Const(c)) if *c == 1.0 => a,
        _ => Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if *y != 0.0 => Expr::Const(x / y),
        (_, Expr::Const(c)) if *c == 1.0 => a,
        _ if a.is_zero() => Expr::Const(0.0),
        _ => Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
    }
}

pub fn pow(e: Expr, k: i32) -> Expr {
    match (&e, k) {
        (_, 0) => Expr::Const(1.0),
        (_, 1) => e,
        (Expr::Const(c), _) if *c != 0.0 || k > 0 => Expr::Const(c.powi(k)),
        _ => Expr::Pow(Box::new(e), k),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "-{}", c.abs())
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Unary(op, e) => match op {
                UnaryOp::Neg => write!(f, "-({e})"),
                UnaryOp::Sin => write!(f, "sin({e})"),
                UnaryOp::Cos => write!(f, "cos({e})"),
                UnaryOp::Exp => write!(f, "exp({e})"),
            },
            Expr::Binary(op, l, r) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                };
                write!(f, "({l} {sym} {r})")
            }
            Expr::Pow(e, k) => write!(f, "({e})^{k}"),
        }
    }
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
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'*' => out.push((Tok::Star, start)),
            b'/' => out.push((Tok::Slash, start)),
            b'^' => out.push((Tok::Caret, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
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
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", src[start..].chars().next().unwrap_or('?')),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::Syntax {
                offset: self.offset(),
                message: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            // `-<literal>` not followed by `^` is a negative constant; this keeps
            // printed negative constants stable under re-parsing.
            if let Some(Tok::Num(v)) = self.peek_at(1) {
                if self.peek_at(2) != Some(&Tok::Caret) {
                    let v = *v;
                    self.pos += 2;
                    return Ok(Expr::Const(-v));
                }
            }
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.atom()?;
        while self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let k = self.exponent()?;
            base = Expr::Pow(Box::new(base), k);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        let offset = self.offset();
        let parenthesized = self.peek() == Some(&Tok::LParen);
        if parenthesized {
            self.pos += 1;
        }
        let negative = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        let k = match self.bump() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= f64::from(i32::MAX) => v as i32,
            _ => return Err(ParseError::NonIntegerExponent { offset }),
        };
        if parenthesized && self.bump() != Some(Tok::RParen) {
            return Err(ParseError::NonIntegerExponent { offset });
        }
        Ok(if negative { -k } else { k })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::Var(Var::X)),
                "t" => Ok(Expr::Var(Var::T)),
                "sin" | "cos" | "exp" => {
                    let op = match name.as_str() {
                        "sin" => UnaryOp::Sin,
                        "cos" => UnaryOp::Cos,
                        _ => UnaryOp::Exp,
                    };
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expr::Unary(op, Box::new(arg)))
                }
                _ => Err(ParseError::UnknownIdentifier { name, offset }),
            },
            Some(_) => Err(ParseError::Syntax {
                offset,
                message: "expected a number, variable, function or `(`".into(),
            }),
            None => Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parse an infix coefficient expression.
pub fn parse_expression(src: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(ParseError::Syntax {
            offset: p.offset(),
            message: "trailing input".into(),
        });
    }
    Ok(e)
}
