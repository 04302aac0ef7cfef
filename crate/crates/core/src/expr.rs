//! Closed-form scalar expressions used by scenario files.
//!
//! Grammar: `+ - * / ^`, parentheses, numeric literals, `pi`, named
//! variables and the functions `sin`, `cos`, `exp`, `sqrt`. Exponents must be
//! constant. Expressions evaluate over any [`Scalar`], which lets the same
//! tree produce values and forward-mode derivatives.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {ch:?} at offset {pos} in {src:?}")]
    UnexpectedChar { src: String, pos: usize, ch: char },
    #[error("unexpected end of expression {0:?}")]
    UnexpectedEnd(String),
    #[error("trailing input at offset {pos} in {src:?}")]
    Trailing { src: String, pos: usize },
    #[error("unknown variable {name:?} in {src:?}")]
    UnknownVariable { src: String, name: String },
    #[error("unknown function {name:?} in {src:?}")]
    UnknownFunction { src: String, name: String },
    #[error("exponent must be constant in {0:?}")]
    NonConstantExponent(String),
}

/// Arithmetic needed to evaluate an expression tree.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        pow_real(self, p)
    }
}

fn pow_real(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

/// First-order dual number `re + eps * du`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub fn new(re: f64, du: f64) -> Self {
        Self { re, du }
    }
    pub fn var(re: f64) -> Self {
        Self { re, du: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.du * o.re + self.re * o.du)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(
            self.re / o.re,
            (self.du * o.re - self.re * o.du) / (o.re * o.re),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.du)
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.du * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.du * self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, self.du * e)
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Dual::new(r, self.du / (2.0 * r))
    }
    fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Dual::new(1.0, 0.0);
        }
        Dual::new(pow_real(self.re, p), self.du * p * pow_real(self.re, p - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval<S: Scalar>(&self, vars: &[S]) -> S {
        match self {
            Node::Const(c) => S::constant(*c),
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Add(a, b) => a.eval(vars) + b.eval(vars),
            Node::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Node::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Node::Div(a, b) => a.eval(vars) / b.eval(vars),
            Node::Pow(a, p) => a.eval(vars).powf(*p),
            Node::Call(f, a) => {
                let x = a.eval(vars);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => x.sqrt(),
                }
            }
        }
    }

    fn uses_vars(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(_) => true,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.uses_vars(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.uses_vars() || b.uses_vars()
            }
        }
    }
}

/// A parsed expression bound to an ordered list of variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    src: String,
    root: Node,
    arity: usize,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl Expr {
    /// Parse `src`; variable `vars[i]` binds to slot `i` at evaluation.
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self, ExprError> {
        let mut p = Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            vars,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(ExprError::Trailing {
                src: src.to_string(),
                pos: p.pos,
            });
        }
        Ok(Self {
            src: src.to_string(),
            root,
            arity: vars.len(),
        })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_constant(&self) -> bool {
        !self.root.uses_vars()
    }

    pub fn eval<S: Scalar>(&self, vars: &[S]) -> S {
        debug_assert_eq!(vars.len(), self.arity);
        self.root.eval(vars)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn end_err(&self) -> ExprError {
        ExprError::UnexpectedEnd(self.src.to_string())
    }

    fn char_err(&self) -> ExprError {
        let ch = self.src[self.pos..].chars().next().unwrap_or('\0');
        ExprError::UnexpectedChar {
            src: self.src.to_string(),
            pos: self.pos,
            ch,
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            if exp.uses_vars() {
                return Err(ExprError::NonConstantExponent(self.src.to_string()));
            }
            let p: f64 = exp.eval::<f64>(&[]);
            return Ok(Node::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let c = self.peek().ok_or_else(|| self.end_err())?;
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(match self.peek() {
                    None => self.end_err(),
                    Some(_) => self.char_err(),
                });
            }
            self.pos += 1;
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < self.bytes.len()
                && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = &self.src[start..self.pos];
            if self.peek() == Some(b'(') {
                let func = match name {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    _ => {
                        return Err(ExprError::UnknownFunction {
                            src: self.src.to_string(),
                            name: name.to_string(),
                        })
                    }
                };
                let arg = self.atom()?;
                return Ok(Node::Call(func, Box::new(arg)));
            }
            if let Some(i) = self.vars.iter().position(|v| *v == name) {
                return Ok(Node::Var(i));
            }
            if name == "pi" {
                return Ok(Node::Const(std::f64::consts::PI));
            }
            return Err(ExprError::UnknownVariable {
                src: self.src.to_string(),
                name: name.to_string(),
            });
        }
        Err(self.char_err())
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Node::Const)
            .map_err(|_| {
                self.pos = start;
                self.char_err()
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-2^2 + 3*4/2 - (1-4)", &[]).unwrap();
        assert_eq!(e.eval::<f64>(&[]), -4.0 + 6.0 + 3.0);
    }

    #[test]
    fn variables_and_functions() {
        let e = Expr::parse("a*sin(pi*t) + exp(0) + sqrt(b)", &["t", "a", "b"]).unwrap();
        let v = e.eval(&[0.5, 2.0, 9.0]);
        assert!((v - 6.0).abs() < 1e-15);
    }

    #[test]
    fn dual_derivative_matches_closed_form() {
        let e = Expr::parse("0.3*(3*t^2 - 2*t^3) + cos(t)", &["t"]).unwrap();
        let t = 0.37;
        let d = e.eval(&[Dual::var(t)]);
        let exact = 0.3 * (6.0 * t - 6.0 * t * t) - t.sin();
        assert!((d.du - exact).abs() < 1e-14);
    }

    #[test]
    fn scientific_literals() {
        let e = Expr::parse("1.5e-1 + 2E1", &[]).unwrap();
        assert!((e.eval::<f64>(&[]) - 20.15).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Expr::parse("x + y", &["x"]),
            Err(ExprError::UnknownVariable { .. })
        ));
        assert!(matches!(
            Expr::parse("t^t", &["t"]),
            Err(ExprError::NonConstantExponent(_))
        ));
        assert!(matches!(Expr::parse("(1+2", &[]), Err(ExprError::UnexpectedEnd(_))));
        assert!(matches!(Expr::parse("1 2", &[]), Err(ExprError::Trailing { .. })));
        assert!(matches!(
            Expr::parse("tan(1)", &[]),
            Err(ExprError::UnknownFunction { .. })
        ));
    }
}
