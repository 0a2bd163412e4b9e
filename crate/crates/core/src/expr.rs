//! A small analytic expression language over named chart coordinates and
//! parameters, evaluated to truncated Taylor jets.
//!
//! Grammar (standard precedence, `^` right-associative):
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | factor
//! factor   := base ('^' exponent)?
//! exponent := rational ('^' exponent)?
//! rational := '-'? number | '(' '-'? number ('/' '-'? number)? ')'
//! base     := number | ident | '(' expr ')' | func '(' expr ')'
//! func     := sin | cos | tan | exp | log | sqrt | atan
//! ```
//!
//! Exponents are rational literals. Integer exponents are evaluated by
//! repeated multiplication and accept negative bases; other exponents need a
//! positive base. The identifier `pi` is a constant unless it is declared as a
//! coordinate or parameter.

use std::fmt;

use thiserror::Error;

use crate::jet::{DomainError, Jet, MAX_ORDER};

/// Largest derivative order exposed through [`Expression::eval_jet`].
pub const MAX_EVAL_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error in `{node}` at point {point:?}: {source}")]
    Domain {
        node: String,
        point: Vec<f64>,
        source: DomainError,
    },
    #[error("jet order {0} out of range 0..={MAX_EVAL_ORDER}")]
    OrderOutOfRange(usize),
    #[error("expected {expected} {what}, got {got}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "atan" => Func::Atan,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    fn apply_f64(self, x: f64) -> Option<f64> {
        let y = match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Log if x > 0.0 => x.ln(),
            Func::Sqrt if x >= 0.0 => x.sqrt(),
            Func::Atan => x.atan(),
            _ => return None,
        };
        y.is_finite().then_some(y)
    }

    fn apply(self, x: &Jet) -> Result<Jet, DomainError> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Tan => x.tan(),
            Func::Exp => Ok(x.exp()),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Atan => Ok(x.atan()),
        }
    }
}

/// Reduced rational exponent `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        let sign = if den < 0 { -1 } else { 1 };
        Some(Self {
            num: sign * num / g.max(1),
            den: sign * den / g.max(1),
        })
    }

    pub fn is_integer(self) -> bool {
        self.den == 1
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 && self.num >= 0 {
            write!(f, "{}", self.num)
        } else if self.den == 1 {
            write!(f, "({})", self.num)
        } else {
            write!(f, "({}/{})", self.num, self.den)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Const(f64),
    Coord(u32),
    Param(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, Rational),
    Func(Func, u32),
}

/// Parsed expression tree, stored as a post-order arena (children precede
/// their parents, the root is last).
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    nodes: Vec<Node>,
    coords: Vec<String>,
    params: Vec<String>,
}

impl Expression {
    pub fn parse<S: AsRef<str>>(
        source: &str,
        coords: &[S],
        params: &[S],
    ) -> Result<Self, ExprError> {
        let coords: Vec<String> = coords.iter().map(|s| s.as_ref().to_string()).collect();
        let params: Vec<String> = params.iter().map(|s| s.as_ref().to_string()).collect();
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            coords: &coords,
            params: &params,
            nodes: Vec::new(),
        };
        parser.expr()?;
        parser.expect_end()?;
        let nodes = parser.nodes;
        Ok(Self {
            nodes,
            coords,
            params,
        })
    }

    pub fn constant<S: AsRef<str>>(value: f64, coords: &[S], params: &[S]) -> Self {
        Self {
            nodes: vec![Node::Const(value)],
            coords: coords.iter().map(|s| s.as_ref().to_string()).collect(),
            params: params.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn free_coords(&self) -> &[String] {
        &self.coords
    }

    pub fn free_params(&self) -> &[String] {
        &self.params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// The folded value when the expression has no coordinate or parameter
    /// references.
    pub fn as_constant(&self) -> Option<f64> {
        match self.nodes.last() {
            Some(Node::Const(c)) if self.nodes.len() == 1 => Some(*c),
            _ => None,
        }
    }

    /// Jet of the expression at `point`, truncated at `order`.
    pub fn eval_jet(&self, point: &[f64], params: &[f64], order: usize) -> Result<Jet, ExprError> {
        if order > MAX_EVAL_ORDER {
            return Err(ExprError::OrderOutOfRange(order));
        }
        if point.len() != self.coords.len() {
            return Err(ExprError::Arity {
                what: "coordinate values",
                expected: self.coords.len(),
                got: point.len(),
            });
        }
        self.eval_inputs(&Jet::seed(point, order), params)
    }

    /// Plain value at `point`.
    pub fn eval(&self, point: &[f64], params: &[f64]) -> Result<f64, ExprError> {
        self.eval_jet(point, params, 0).map(|j| j.value())
    }

    /// Evaluates with arbitrary jets substituted for the coordinates. This is
    /// how expressions are composed with coordinate maps or restricted to
    /// submanifolds.
    pub fn eval_inputs(&self, inputs: &[Jet], params: &[f64]) -> Result<Jet, ExprError> {
        if inputs.len() != self.coords.len() {
            return Err(ExprError::Arity {
                what: "coordinate inputs",
                expected: self.coords.len(),
                got: inputs.len(),
            });
        }
        if params.len() != self.params.len() {
            return Err(ExprError::Arity {
                what: "parameter values",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        let (dim, order) = match inputs.first() {
            Some(j) => (j.dim(), j.order()),
            None => (0, 0),
        };
        assert!(order <= MAX_ORDER);
        let mut values: Vec<Jet> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let domain = |source: DomainError| ExprError::Domain {
                node: self.subexpression(idx),
                point: inputs.iter().map(Jet::value).collect(),
                source,
            };
            let v = match *node {
                Node::Const(c) => Jet::constant(dim, order, c),
                Node::Coord(i) => inputs[i as usize].clone(),
                Node::Param(i) => Jet::constant(dim, order, params[i as usize]),
                Node::Neg(a) => -&values[a as usize],
                Node::Add(a, b) => &values[a as usize] + &values[b as usize],
                Node::Sub(a, b) => &values[a as usize] - &values[b as usize],
                Node::Mul(a, b) => &values[a as usize] * &values[b as usize],
                Node::Div(a, b) => values[a as usize]
                    .try_div(&values[b as usize])
                    .map_err(domain)?,
                Node::Pow(a, p) => {
                    let base = &values[a as usize];
                    if p.is_integer() {
                        base.powi(p.num).map_err(domain)?
                    } else {
                        base.powf(p.to_f64()).map_err(domain)?
                    }
                }
                Node::Func(f, a) => f.apply(&values[a as usize]).map_err(domain)?,
            };
            values.push(v);
        }
        Ok(values.pop().expect("expression has a root"))
    }

    fn subexpression(&self, idx: usize) -> String {
        let mut out = String::new();
        self.write_node(&mut out, idx).ok();
        out
    }

    fn write_node(&self, out: &mut dyn fmt::Write, idx: usize) -> fmt::Result {
        let binary = |out: &mut dyn fmt::Write, a: u32, op: &str, b: u32| -> fmt::Result {
            out.write_str("(")?;
            self.write_node(out, a as usize)?;
            write!(out, " {op} ")?;
            self.write_node(out, b as usize)?;
            out.write_str(")")
        };
        match self.nodes[idx] {
            Node::Const(c) => {
                if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
                    write!(out, "(-{:?})", -c)
                } else {
                    write!(out, "{c:?}")
                }
            }
            Node::Coord(i) => out.write_str(&self.coords[i as usize]),
            Node::Param(i) => out.write_str(&self.params[i as usize]),
            Node::Neg(a) => {
                out.write_str("(-")?;
                self.write_node(out, a as usize)?;
                out.write_str(")")
            }
            Node::Add(a, b) => binary(out, a, "+", b),
            Node::Sub(a, b) => binary(out, a, "-", b),
            Node::Mul(a, b) => binary(out, a, "*", b),
            Node::Div(a, b) => binary(out, a, "/", b),
            Node::Pow(a, p) => {
                let nested = matches!(self.nodes[a as usize], Node::Pow(..));
                if nested {
                    out.write_str("(")?;
                }
                self.write_node(out, a as usize)?;
                if nested {
                    out.write_str(")")?;
                }
                write!(out, "^{p}")
            }
            Node::Func(f, a) => {
                write!(out, "{}(", f.name())?;
                self.write_node(out, a as usize)?;
                out.write_str(")")
            }
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_node(f, self.nodes.len() - 1)
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

fn lex(source: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = source.as_bytes();
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
                let end = scan_number(bytes, i);
                let text = &source[i..end];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    expected: vec!["number".into()],
                    found: format!("`{text}`"),
                })?;
                i = end;
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = i;
                while end < bytes.len()
                    && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                out.push((Tok::Ident(source[i..end].to_string()), start));
                i = end;
                continue;
            }
            _ => {
                let ch = source[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    expected: vec!["token".into()],
                    found: format!("`{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, source.len()));
    Ok(out)
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
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
    i
}

/// Converts a finite decimal literal to an exact rational if it has one
/// with a small denominator.
fn literal_rational(value: f64) -> Option<Rational> {
    for den in [1i64, 2, 3, 4, 5, 6, 8, 10, 100, 1000, 10000] {
        let num = (value * den as f64).round();
        if (num / den as f64 - value).abs() <= 1e-12 * value.abs().max(1.0) && num.abs() < 1e15 {
            return Rational::new(num as i64, den);
        }
    }
    None
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    coords: &'a [String],
    params: &'a [String],
    nodes: Vec<Node>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expect_end(&self) -> Result<(), ExprError> {
        match self.peek() {
            Tok::End => Ok(()),
            _ => self.error(&["operator", "end of input"]),
        }
    }

    fn push(&mut self, node: Node) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    fn constant_at(&self, idx: u32) -> Option<f64> {
        match self.nodes[idx as usize] {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Pushes a binary node, folding it when both operands are literals.
    fn binary(&mut self, make: fn(u32, u32) -> Node, a: u32, b: u32) -> u32 {
        if let (Some(x), Some(y)) = (self.constant_at(a), self.constant_at(b)) {
            let folded = match make(0, 0) {
                Node::Add(..) => Some(x + y),
                Node::Sub(..) => Some(x - y),
                Node::Mul(..) => Some(x * y),
                Node::Div(..) if y != 0.0 => Some(x / y),
                _ => None,
            };
            if let Some(v) = folded.filter(|v| v.is_finite()) {
                debug_assert_eq!(b as usize, self.nodes.len() - 1);
                self.nodes.truncate(a as usize);
                return self.push(Node::Const(v));
            }
        }
        self.push(make(a, b))
    }

    fn unary(&mut self, node: Node, a: u32, fold: Option<f64>) -> u32 {
        if let Some(v) = fold.filter(|v| v.is_finite()) {
            self.nodes.truncate(a as usize);
            return self.push(Node::Const(v));
        }
        self.push(node)
    }

    fn expr(&mut self) -> Result<u32, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let make: fn(u32, u32) -> Node = match self.peek() {
                Tok::Plus => Node::Add,
                Tok::Minus => Node::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = self.binary(make, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<u32, ExprError> {
        let mut lhs = self.signed()?;
        loop {
            let make: fn(u32, u32) -> Node = match self.peek() {
                Tok::Star => Node::Mul,
                Tok::Slash => Node::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.signed()?;
            lhs = self.binary(make, lhs, rhs);
        }
    }

    fn signed(&mut self) -> Result<u32, ExprError> {
        if matches!(self.peek(), Tok::Minus) {
            self.bump();
            let a = self.signed()?;
            let fold = self.constant_at(a).map(|c| -c);
            return Ok(self.unary(Node::Neg(a), a, fold));
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<u32, ExprError> {
        let base = self.base()?;
        if !matches!(self.peek(), Tok::Caret) {
            return Ok(base);
        }
        self.bump();
        let p = self.exponent()?;
        let fold = self.constant_at(base).and_then(|c| {
            if p.is_integer() {
                let v = c.powi(p.num as i32);
                v.is_finite().then_some(v)
            } else if c > 0.0 {
                Some(c.powf(p.to_f64()))
            } else {
                None
            }
        });
        Ok(self.unary(Node::Pow(base, p), base, fold))
    }

    fn exponent(&mut self) -> Result<Rational, ExprError> {
        let start = self.offset();
        let p = if matches!(self.peek(), Tok::LParen) {
            self.bump();
            let num = self.signed_literal()?;
            let den = if matches!(self.peek(), Tok::Slash) {
                self.bump();
                self.signed_literal()?
            } else {
                Rational { num: 1, den: 1 }
            };
            if !matches!(self.peek(), Tok::RParen) {
                return self.error(&["`/`", "`)`"]);
            }
            self.bump();
            Rational::new(num.num * den.den, num.den * den.num).ok_or(ExprError::Syntax {
                offset: start,
                expected: vec!["non-zero denominator".into()],
                found: "zero".into(),
            })?
        } else {
            self.signed_literal()?
        };
        if matches!(self.peek(), Tok::Caret) {
            self.bump();
            let outer = self.exponent()?;
            if !outer.is_integer() || outer.num.unsigned_abs() > 16 {
                return Err(ExprError::Syntax {
                    offset: start,
                    expected: vec!["small integer exponent in a power tower".into()],
                    found: outer.to_string(),
                });
            }
            let (mut num, mut den) = (1i64, 1i64);
            for _ in 0..outer.num.unsigned_abs() {
                num = num.saturating_mul(p.num);
                den = den.saturating_mul(p.den);
            }
            if outer.num < 0 {
                std::mem::swap(&mut num, &mut den);
            }
            return Rational::new(num, den).ok_or(ExprError::Syntax {
                offset: start,
                expected: vec!["non-zero exponent base".into()],
                found: "zero".into(),
            });
        }
        Ok(p)
    }

    fn signed_literal(&mut self) -> Result<Rational, ExprError> {
        let negative = if matches!(self.peek(), Tok::Minus) {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(v) => {
                let r = literal_rational(v).ok_or(ExprError::Syntax {
                    offset: self.offset(),
                    expected: vec!["rational exponent".into()],
                    found: format!("{v}"),
                })?;
                self.bump();
                Ok(if negative {
                    Rational {
                        num: -r.num,
                        den: r.den,
                    }
                } else {
                    r
                })
            }
            _ => self.error(&["rational literal"]),
        }
    }

    fn base(&mut self) -> Result<u32, ExprError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(self.push(Node::Const(v)))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if !matches!(self.peek(), Tok::RParen) {
                    return self.error(&["`)`"]);
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(f) = Func::from_name(&name) {
                    if matches!(self.peek(), Tok::LParen) {
                        self.bump();
                        let arg = self.expr()?;
                        if !matches!(self.peek(), Tok::RParen) {
                            return self.error(&["`)`"]);
                        }
                        self.bump();
                        let fold = self.constant_at(arg).and_then(|c| f.apply_f64(c));
                        return Ok(self.unary(Node::Func(f, arg), arg, fold));
                    }
                }
                if let Some(i) = self.coords.iter().position(|c| *c == name) {
                    return Ok(self.push(Node::Coord(i as u32)));
                }
                if let Some(i) = self.params.iter().position(|c| *c == name) {
                    return Ok(self.push(Node::Param(i as u32)));
                }
                if name == "pi" {
                    return Ok(self.push(Node::Const(std::f64::consts::PI)));
                }
                Err(ExprError::UnknownIdentifier { name, offset })
            }
            _ => self.error(&["number", "identifier", "`(`"]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_kerr_component() {
        let e = Expression::parse(
            "2*m*r/(r^2 + a^2*cos(theta)^2)",
            &["r", "theta"],
            &["m", "a"],
        )
        .unwrap();
        assert_eq!(e.free_coords().len(), 2);
        assert_eq!(e.free_params().len(), 2);
        let v = e.eval(&[2.0, 0.3], &[1.0, 0.5]).unwrap();
        let expected = 4.0 / (4.0 + 0.25 * 0.3f64.cos().powi(2));
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_is_constant() {
        let e = Expression::parse::<&str>("0", &[], &[]).unwrap();
        assert_eq!(e.as_constant(), Some(0.0));
    }

    #[test]
    fn dangling_caret_is_syntax_error_at_offset_two() {
        let err = Expression::parse("r^", &["r"], &[]).unwrap_err();
        match err {
            ExprError::Syntax { offset, .. } => assert_eq!(offset, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        let err = Expression::parse("r + q", &["r"], &[]).unwrap_err();
        assert_eq!(
            err,
            ExprError::UnknownIdentifier {
                name: "q".into(),
                offset: 4
            }
        );
    }

    #[test]
    fn trailing_garbage() {
        assert!(matches!(
            Expression::parse("r r", &["r"], &[]),
            Err(ExprError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            Expression::parse("(r", &["r"], &[]),
            Err(ExprError::Syntax { offset: 2, .. })
        ));
        assert!(Expression::parse("r^x", &["r", "x"], &[]).is_err());
    }

    #[test]
    fn polynomial_jet() {
        let e = Expression::parse("x^2", &["x"], &[] as &[&str]).unwrap();
        let j = e.eval_jet(&[3.0], &[], 2).unwrap();
        assert_eq!(j.coeffs(), &[9.0, 6.0, 1.0]);
    }

    #[test]
    fn sine_jet() {
        let e = Expression::parse("sin(x)", &["x"], &[] as &[&str]).unwrap();
        let j = e.eval_jet(&[0.0], &[], 3).unwrap();
        let expected = [0.0, 1.0, 0.0, -1.0 / 6.0];
        for (c, x) in j.coeffs().iter().zip(expected) {
            assert!((c - x).abs() < 1e-16);
        }
    }

    #[test]
    fn schwarzschild_gvv_jet() {
        let e = Expression::parse("2*m/r - 1", &["r"], &["m"]).unwrap();
        let j = e.eval_jet(&[2.0], &[1.0], 1).unwrap();
        assert!(j.value().abs() < 1e-16);
        assert!((j.coeffs()[1] + 0.5).abs() < 1e-16);
    }

    #[test]
    fn order_and_domain_errors() {
        let e = Expression::parse("log(x)", &["x"], &[] as &[&str]).unwrap();
        assert_eq!(
            e.eval_jet(&[1.0], &[], 5).unwrap_err(),
            ExprError::OrderOutOfRange(5)
        );
        let err = e.eval_jet(&[-1.0], &[], 1).unwrap_err();
        assert!(matches!(err, ExprError::Domain { ref node, .. } if node == "log(x)"));
        let d = Expression::parse("1/(x - 1)", &["x"], &[] as &[&str]).unwrap();
        assert!(matches!(d.eval(&[1.0], &[]), Err(ExprError::Domain { .. })));
    }

    #[test]
    fn constant_folding() {
        let e = Expression::parse("2*3 + x*(1/4)", &["x"], &[] as &[&str]).unwrap();
        assert_eq!(e.node_count(), 5);
        let c = Expression::parse::<&str>("sqrt(4)^3 - 2^(1/2)*2^(1/2)", &[], &[]).unwrap();
        let v = c.as_constant().unwrap();
        assert!((v - 6.0).abs() < 1e-14);
    }

    #[test]
    fn exponent_forms() {
        let coords = ["x"];
        let none: [&str; 0] = [];
        let cases = [
            ("x^(1/2)", 2f64.sqrt()),
            ("x^-1", 0.5),
            ("x^(-3/2)", 2f64.powf(-1.5)),
            ("x^1.5", 2f64.powf(1.5)),
            ("x^2^2", 16.0),
            ("-x^2", -4.0),
        ];
        for (src, want) in cases {
            let e = Expression::parse(src, &coords, &none).unwrap();
            let got = e.eval(&[2.0], &[]).unwrap();
            assert!((got - want).abs() < 1e-14, "{src}: {got} vs {want}");
        }
    }

    #[test]
    fn integer_power_of_negative_base() {
        let e = Expression::parse("cos(t)^2", &["t"], &[] as &[&str]).unwrap();
        let v = e.eval(&[3.0], &[]).unwrap();
        assert!((v - 3f64.cos().powi(2)).abs() < 1e-15);
        let f = Expression::parse("t^(1/2)", &["t"], &[] as &[&str]).unwrap();
        assert!(f.eval(&[-1.0], &[]).is_err());
    }

    #[test]
    fn display_round_trip() {
        let src = "-a*sin(theta)^2/(r^2 + a^2*cos(theta)^2) - 1.5e-3*exp(-r)^(1/3) + atan(tan(r))";
        let e = Expression::parse(src, &["r", "theta"], &["a"]).unwrap();
        let printed = e.to_string();
        let again = Expression::parse(&printed, &["r", "theta"], &["a"]).unwrap();
        assert_eq!(e, again, "{printed}");
    }

    #[test]
    fn composition_through_jet_inputs() {
        // f(x) = x^2 with x = sin(u): d/du = 2 sin u cos u
        let f = Expression::parse("x^2", &["x"], &[] as &[&str]).unwrap();
        let u = Jet::variable(1, 2, 0, 0.4);
        let j = f.eval_inputs(&[u.sin()], &[]).unwrap();
        assert!((j.partial(&[0]) - 0.8f64.sin()).abs() < 1e-15);
    }
}
