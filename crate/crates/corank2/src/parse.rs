//! Text grammar for scalar expressions, coordinate 1-forms and vector
//! fields.
//!
//! The grammar is a conventional infix one: `+ - * / ^` with explicit
//! multiplication, parentheses, function calls `sqrt(...)`, `sin`, `cos`,
//! `tan`, `atan`, `exp`, numeric literals with optional `i` suffix for
//! imaginary values, and integer exponents. On top of the scalar grammar,
//! 1-forms admit the atoms `dx1 .. dz2` and vector fields the atoms
//! `@x1 .. @z2`; both kinds of atom may only be combined linearly (scaled
//! by scalars and added), never multiplied together.

use std::fmt;

use thiserror::Error;

use crate::exterior::{Form, VectorField};
use crate::scalar::{Coordinate, ScalarExpr, UnaryFn};

/// Parse failure with a byte position into the source string.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at column {}: {message}", position + 1)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

fn err<T>(position: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        position,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, imaginary: bool },
    Ident(String),
    Basis(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num { value, imaginary } => {
                write!(f, "{}{}", value, if *imaginary { "i" } else { "" })
            }
            Tok::Ident(s) => write!(f, "`{}`", s),
            Tok::Basis(s) => write!(f, "`@{}`", s),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Caret => write!(f, "`^`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn ident_at(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    /// Next token and the byte position where it starts.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos];
        let simple = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = simple {
            self.pos += 1;
            return Ok((t, start));
        }
        if c == b'@' {
            self.pos += 1;
            let name = self.ident_at();
            if name.is_empty() {
                return err(start, "expected a coordinate name after `@`");
            }
            return Ok((Tok::Basis(name), start));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let name = self.ident_at();
            return Ok((Tok::Ident(name), start));
        }
        err(start, format!("unexpected character `{}`", c as char))
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mut probe = self.pos + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = match text.parse() {
            Ok(v) => v,
            Err(_) => return err(start, format!("invalid number `{}`", text)),
        };
        // An `i` suffix makes the literal imaginary, provided it is not the
        // start of an identifier.
        let mut imaginary = false;
        if self.pos < self.src.len() && self.src[self.pos] == b'i' {
            let after = self.pos + 1;
            let clean = after >= self.src.len()
                || !(self.src[after].is_ascii_alphanumeric() || self.src[after] == b'_');
            if clean {
                self.pos += 1;
                imaginary = true;
            }
        }
        Ok((Tok::Num { value, imaginary }, start))
    }
}

/// What non-scalar atoms the current grammar admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AtomKind {
    ScalarOnly,
    OneForm,
    Field,
}

/// A partially evaluated value: a scalar, or a linear combination of the
/// six non-scalar atoms (differentials or basis fields, per context).
enum Val {
    Scalar(ScalarExpr),
    Linear(Box<[ScalarExpr; 6]>),
}

impl Val {
    fn kind_name(&self, kind: AtomKind) -> &'static str {
        match self {
            Val::Scalar(_) => "scalar",
            Val::Linear(_) => match kind {
                AtomKind::OneForm => "differential",
                _ => "vector",
            },
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    tok_pos: usize,
    kind: AtomKind,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, kind: AtomKind) -> Result<Parser<'a>, ParseError> {
        let mut lexer = Lexer::new(src);
        let (tok, tok_pos) = lexer.next()?;
        Ok(Parser {
            lexer,
            tok,
            tok_pos,
            kind,
        })
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let (tok, pos) = self.lexer.next()?;
        self.tok = tok;
        self.tok_pos = pos;
        Ok(())
    }

    fn parse_full(&mut self) -> Result<Val, ParseError> {
        let v = self.expr()?;
        if self.tok != Tok::End {
            return err(self.tok_pos, format!("unexpected {}", self.tok));
        }
        Ok(v)
    }

    fn expr(&mut self) -> Result<Val, ParseError> {
        let mut acc = self.term()?;
        loop {
            let negate = match self.tok {
                Tok::Plus => false,
                Tok::Minus => true,
                _ => return Ok(acc),
            };
            let op_pos = self.tok_pos;
            self.advance()?;
            let mut rhs = self.term()?;
            if negate {
                rhs = neg(rhs);
            }
            acc = self.add(acc, rhs, op_pos)?;
        }
    }

    fn term(&mut self) -> Result<Val, ParseError> {
        let mut acc = self.unary()?;
        loop {
            let divide = match self.tok {
                Tok::Star => false,
                Tok::Slash => true,
                _ => return Ok(acc),
            };
            let op_pos = self.tok_pos;
            self.advance()?;
            let rhs = self.unary()?;
            acc = if divide {
                self.div(acc, rhs, op_pos)?
            } else {
                self.mul(acc, rhs, op_pos)?
            };
        }
    }

    fn unary(&mut self) -> Result<Val, ParseError> {
        if self.tok == Tok::Minus {
            self.advance()?;
            return Ok(neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Val, ParseError> {
        let base = self.atom()?;
        if self.tok != Tok::Caret {
            return Ok(base);
        }
        let caret_pos = self.tok_pos;
        self.advance()?;
        let mut sign = 1i64;
        if self.tok == Tok::Minus {
            sign = -1;
            self.advance()?;
        }
        let n = match self.tok {
            Tok::Num { value, imaginary: false } if value.fract() == 0.0 && value.abs() <= 64.0 => {
                value as i64
            }
            _ => {
                return err(
                    self.tok_pos,
                    "exponent must be an integer between -64 and 64",
                )
            }
        };
        self.advance()?;
        match base {
            Val::Scalar(e) => Ok(Val::Scalar(e.pow((sign * n) as i32))),
            v => err(
                caret_pos,
                format!("cannot raise a {} term to a power", v.kind_name(self.kind)),
            ),
        }
    }

    fn atom(&mut self) -> Result<Val, ParseError> {
        let pos = self.tok_pos;
        match self.tok.clone() {
            Tok::Num { value, imaginary } => {
                self.advance()?;
                let c = if imaginary {
                    num_complex::Complex64::new(0.0, value)
                } else {
                    num_complex::Complex64::new(value, 0.0)
                };
                Ok(Val::Scalar(ScalarExpr::constant(c)))
            }
            Tok::LParen => {
                self.advance()?;
                let v = self.expr()?;
                if self.tok != Tok::RParen {
                    return err(self.tok_pos, format!("expected `)`, found {}", self.tok));
                }
                self.advance()?;
                Ok(v)
            }
            Tok::Basis(name) => {
                if self.kind != AtomKind::Field {
                    return err(pos, "`@` basis fields are not allowed in this expression");
                }
                let Some(c) = Coordinate::parse(&name) else {
                    return err(pos, format!("unknown coordinate `{}` after `@`", name));
                };
                self.advance()?;
                Ok(linear_basis(c))
            }
            Tok::Ident(name) => {
                self.advance()?;
                self.ident(&name, pos)
            }
            other => err(pos, format!("expected an expression, found {}", other)),
        }
    }

    fn ident(&mut self, name: &str, pos: usize) -> Result<Val, ParseError> {
        if let Some(f) = UnaryFn::parse(name) {
            if self.tok != Tok::LParen {
                return err(self.tok_pos, format!("expected `(` after `{}`", name));
            }
            self.advance()?;
            let arg = self.expr()?;
            if self.tok != Tok::RParen {
                return err(self.tok_pos, format!("expected `)`, found {}", self.tok));
            }
            self.advance()?;
            return match arg {
                Val::Scalar(e) => Ok(Val::Scalar(ScalarExpr::func(f, e))),
                v => err(
                    pos,
                    format!(
                        "cannot apply `{}` to a {} term",
                        name,
                        v.kind_name(self.kind)
                    ),
                ),
            };
        }
        if name == "i" {
            return Ok(Val::Scalar(ScalarExpr::i()));
        }
        if name == "pi" {
            return Ok(Val::Scalar(ScalarExpr::constant(std::f64::consts::PI)));
        }
        if let Some(c) = Coordinate::parse(name) {
            return Ok(Val::Scalar(ScalarExpr::coord(c)));
        }
        if self.kind == AtomKind::OneForm {
            if let Some(rest) = name.strip_prefix('d') {
                if let Some(c) = Coordinate::parse(rest) {
                    return Ok(linear_basis(c));
                }
            }
        }
        err(pos, format!("unknown identifier `{}`", name))
    }

    fn add(&mut self, a: Val, b: Val, pos: usize) -> Result<Val, ParseError> {
        match (a, b) {
            (Val::Scalar(x), Val::Scalar(y)) => Ok(Val::Scalar(x + y)),
            (Val::Linear(x), Val::Linear(y)) => Ok(Val::Linear(Box::new(
                std::array::from_fn(|i| x[i].clone() + y[i].clone()),
            ))),
            (a, b) => err(
                pos,
                format!(
                    "cannot add a {} term and a {} term",
                    a.kind_name(self.kind),
                    b.kind_name(self.kind)
                ),
            ),
        }
    }

    fn mul(&mut self, a: Val, b: Val, pos: usize) -> Result<Val, ParseError> {
        match (a, b) {
            (Val::Scalar(x), Val::Scalar(y)) => Ok(Val::Scalar(x * y)),
            (Val::Scalar(s), Val::Linear(v)) | (Val::Linear(v), Val::Scalar(s)) => Ok(
                Val::Linear(Box::new(std::array::from_fn(|i| s.clone() * v[i].clone()))),
            ),
            (a, b) => err(
                pos,
                format!(
                    "cannot multiply a {} term by a {} term",
                    a.kind_name(self.kind),
                    b.kind_name(self.kind)
                ),
            ),
        }
    }

    fn div(&mut self, a: Val, b: Val, pos: usize) -> Result<Val, ParseError> {
        match (a, b) {
            (Val::Scalar(x), Val::Scalar(y)) => Ok(Val::Scalar(x / y)),
            (Val::Linear(v), Val::Scalar(s)) => Ok(Val::Linear(Box::new(std::array::from_fn(
                |i| v[i].clone() / s.clone(),
            )))),
            (_, b) => err(
                pos,
                format!("cannot divide by a {} term", b.kind_name(self.kind)),
            ),
        }
    }
}

fn neg(v: Val) -> Val {
    match v {
        Val::Scalar(e) => Val::Scalar(-e),
        Val::Linear(c) => Val::Linear(Box::new(c.map(|e| -e))),
    }
}

fn linear_basis(c: Coordinate) -> Val {
    let mut coeffs: [ScalarExpr; 6] = std::array::from_fn(|_| ScalarExpr::zero());
    coeffs[c.index()] = ScalarExpr::one();
    Val::Linear(Box::new(coeffs))
}

/// Parses a scalar expression in the six coordinates.
pub fn parse_scalar(src: &str) -> Result<ScalarExpr, ParseError> {
    let mut p = Parser::new(src, AtomKind::ScalarOnly)?;
    match p.parse_full()? {
        Val::Scalar(e) => Ok(e),
        Val::Linear(_) => unreachable!("scalar grammar admits no linear atoms"),
    }
}

/// Parses a 1-form written with `dx1 .. dz2` atoms.
pub fn parse_one_form(src: &str) -> Result<Form, ParseError> {
    let mut p = Parser::new(src, AtomKind::OneForm)?;
    match p.parse_full()? {
        Val::Linear(coeffs) => Ok(Form::one_form(*coeffs)),
        Val::Scalar(e) if e.is_zero() => Ok(Form::zero(1)),
        Val::Scalar(_) => err(0, "expected a 1-form, found a plain scalar"),
    }
}

/// Parses a vector field written with `@x1 .. @z2` atoms.
pub fn parse_vector_field(src: &str) -> Result<VectorField, ParseError> {
    let mut p = Parser::new(src, AtomKind::Field)?;
    match p.parse_full()? {
        Val::Linear(coeffs) => Ok(VectorField(*coeffs)),
        Val::Scalar(e) if e.is_zero() => Ok(VectorField::zero()),
        Val::Scalar(_) => err(0, "expected a vector field, found a plain scalar"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Point;

    #[test]
    fn scalar_roundtrip_value() {
        let src = "x2^3/3 + x2 + 2*x1";
        let e = parse_scalar(src).unwrap();
        let p = Point([0.5, 0.2, 0.0, 0.0, 0.0, 0.0]);
        let v = e.eval_real(&p).unwrap();
        assert!((v - (0.2f64.powi(3) / 3.0 + 0.2 + 1.0)).abs() < 1e-15);
        // Print and reparse, compare values again.
        let printed = e.to_string();
        let e2 = parse_scalar(&printed).unwrap();
        assert!((e2.eval_real(&p).unwrap() - v).abs() < 1e-15);
    }

    #[test]
    fn one_form_parsing() {
        let f = parse_one_form("dz1 - y1*dx1 - y2*dx2 - (x2^3/3 + x2 + 2*x1)*dy1").unwrap();
        assert_eq!(f.degree(), 1);
        let p = Point([0.1, 0.3, 0.7, -0.2, 0.0, 0.0]);
        // Coefficient of dx1 is -y1.
        let c = f.coefficient(1 << 0).eval_real(&p).unwrap();
        assert!((c + 0.7).abs() < 1e-15);
        // Coefficient of dy1 is -(x2^3/3 + x2 + 2 x1).
        let a = f.coefficient(1 << 2).eval_real(&p).unwrap();
        let expect = -(0.3f64.powi(3) / 3.0 + 0.3 + 0.2);
        assert!((a - expect).abs() < 1e-15);
    }

    #[test]
    fn vector_field_parsing() {
        let v = parse_vector_field("@x1 + y1*@z1 + y2*@z2").unwrap();
        let p = Point([0.0, 0.0, 2.0, 3.0, 0.0, 0.0]);
        let vals = v.eval(&p).unwrap();
        assert_eq!(vals, [1.0, 0.0, 0.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn error_positions() {
        let e = parse_scalar("x1 + * 2").unwrap_err();
        assert_eq!(e.position, 5);
        let e = parse_one_form("dx1 * dx2").unwrap_err();
        assert!(e.message.contains("multiply"));
        let e = parse_scalar("foo + 1").unwrap_err();
        assert!(e.message.contains("unknown identifier"));
        let e = parse_scalar("sqrt 4").unwrap_err();
        assert!(e.message.contains("expected `(`"));
    }

    #[test]
    fn imaginary_literals() {
        let e = parse_scalar("2i * x1").unwrap();
        let p = Point([3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let v = e.eval(&p, crate::scalar::EvalMode::Complex).unwrap();
        assert!((v - num_complex::Complex64::new(0.0, 6.0)).norm() < 1e-15);
    }
}
