//! Closed-form scalar expressions in the two angular coordinates.
//!
//! Expressions carry symbolic differentiation and forward-mode evaluation of
//! value plus gradient, so base maps, frames and metrics never need finite
//! differences. The textual form produced by `Display` parses back to the same
//! tree, which is what the manifest and layer-stack files rely on.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Exp,
    Ln,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    /// Value and first derivative of the function at `x`.
    fn value_slope(self, x: f64) -> (f64, f64) {
        match self {
            Func::Sin => (x.sin(), x.cos()),
            Func::Cos => (x.cos(), -x.sin()),
            Func::Sqrt => {
                let s = x.sqrt();
                (s, 0.5 / s)
            }
            Func::Exp => {
                let e = x.exp();
                (e, e)
            }
            Func::Ln => (x.ln(), 1.0 / x),
            Func::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Powi(Expr, i32),
    Call(Func, Expr),
}

/// An immutable, cheaply clonable expression tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Arc<Node>);

pub const THETA: usize = 0;
pub const PHI: usize = 1;

impl Expr {
    fn node(n: Node) -> Expr {
        Expr(Arc::new(n))
    }

    pub fn constant(c: f64) -> Expr {
        Expr::node(Node::Const(c))
    }

    pub fn var(axis: usize) -> Expr {
        assert!(axis < 2, "only two coordinates exist");
        Expr::node(Node::Var(axis))
    }

    pub fn theta() -> Expr {
        Expr::var(THETA)
    }

    pub fn phi() -> Expr {
        Expr::var(PHI)
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn add(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => rhs.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr::node(Node::Add(self.clone(), rhs.clone())),
        }
    }

    pub fn sub(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(a), _) if a == 0.0 => rhs.neg(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr::node(Node::Sub(self.clone(), rhs.clone())),
        }
    }

    pub fn mul(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) | (_, Some(a)) if a == 0.0 => Expr::constant(0.0),
            (Some(a), _) if a == 1.0 => rhs.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expr::node(Node::Mul(self.clone(), rhs.clone())),
        }
    }

    pub fn div(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a / b),
            (Some(a), _) if a == 0.0 => Expr::constant(0.0),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expr::node(Node::Div(self.clone(), rhs.clone())),
        }
    }

    pub fn neg(&self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::node(Node::Neg(self.clone())),
        }
    }

    pub fn powi(&self, n: i32) -> Expr {
        match (n, self.as_const()) {
            (0, _) => Expr::constant(1.0),
            (1, _) => self.clone(),
            (_, Some(c)) => Expr::constant(c.powi(n)),
            _ => Expr::node(Node::Powi(self.clone(), n)),
        }
    }

    pub fn call(f: Func, arg: &Expr) -> Expr {
        match arg.as_const() {
            Some(c) => Expr::constant(f.value_slope(c).0),
            None => Expr::node(Node::Call(f, arg.clone())),
        }
    }

    pub fn sin(&self) -> Expr {
        Expr::call(Func::Sin, self)
    }

    pub fn cos(&self) -> Expr {
        Expr::call(Func::Cos, self)
    }

    pub fn sqrt(&self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::constant(c).mul(self)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(i) => x[*i],
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Neg(a) => -a.eval(x),
            Node::Powi(a, n) => a.eval(x).powi(*n),
            Node::Call(f, a) => f.value_slope(a.eval(x)).0,
        }
    }

    /// Value and exact gradient `[d/dtheta, d/dphi]` by forward-mode propagation.
    pub fn eval_grad(&self, x: &Point) -> (f64, [f64; 2]) {
        match &*self.0 {
            Node::Const(c) => (*c, [0.0; 2]),
            Node::Var(i) => {
                let mut g = [0.0; 2];
                g[*i] = 1.0;
                (x[*i], g)
            }
            Node::Add(a, b) => {
                let (u, du) = a.eval_grad(x);
                let (v, dv) = b.eval_grad(x);
                (u + v, [du[0] + dv[0], du[1] + dv[1]])
            }
            Node::Sub(a, b) => {
                let (u, du) = a.eval_grad(x);
                let (v, dv) = b.eval_grad(x);
                (u - v, [du[0] - dv[0], du[1] - dv[1]])
            }
            Node::Mul(a, b) => {
                let (u, du) = a.eval_grad(x);
                let (v, dv) = b.eval_grad(x);
                (u * v, [du[0] * v + u * dv[0], du[1] * v + u * dv[1]])
            }
            Node::Div(a, b) => {
                let (u, du) = a.eval_grad(x);
                let (v, dv) = b.eval_grad(x);
                let q = u / v;
                (q, [(du[0] - q * dv[0]) / v, (du[1] - q * dv[1]) / v])
            }
            Node::Neg(a) => {
                let (u, du) = a.eval_grad(x);
                (-u, [-du[0], -du[1]])
            }
            Node::Powi(a, n) => {
                let (u, du) = a.eval_grad(x);
                let s = f64::from(*n) * u.powi(n - 1);
                (u.powi(*n), [s * du[0], s * du[1]])
            }
            Node::Call(f, a) => {
                let (u, du) = a.eval_grad(x);
                let (v, s) = f.value_slope(u);
                (v, [s * du[0], s * du[1]])
            }
        }
    }

    /// Symbolic partial derivative with respect to coordinate `axis`.
    pub fn diff(&self, axis: usize) -> Expr {
        match &*self.0 {
            Node::Const(_) => Expr::constant(0.0),
            Node::Var(i) => Expr::constant(if *i == axis { 1.0 } else { 0.0 }),
            Node::Add(a, b) => a.diff(axis).add(&b.diff(axis)),
            Node::Sub(a, b) => a.diff(axis).sub(&b.diff(axis)),
            Node::Mul(a, b) => a.diff(axis).mul(b).add(&a.mul(&b.diff(axis))),
            Node::Div(a, b) => {
                let num = a.diff(axis).mul(b).sub(&a.mul(&b.diff(axis)));
                num.div(&b.powi(2))
            }
            Node::Neg(a) => a.diff(axis).neg(),
            Node::Powi(a, n) => a
                .powi(n - 1)
                .scale(f64::from(*n))
                .mul(&a.diff(axis)),
            Node::Call(f, a) => {
                let da = a.diff(axis);
                if da.is_zero() {
                    return Expr::constant(0.0);
                }
                let outer = match f {
                    Func::Sin => a.cos(),
                    Func::Cos => a.sin().neg(),
                    Func::Sqrt => Expr::constant(0.5).div(&a.sqrt()),
                    Func::Exp => Expr::call(Func::Exp, a),
                    Func::Ln => Expr::constant(1.0).div(a),
                    Func::Tanh => Expr::constant(1.0).sub(&Expr::call(Func::Tanh, a).powi(2)),
                };
                outer.mul(&da)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.fail("trailing input"));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{:?})", -c)
            }
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(THETA) => write!(f, "theta"),
            Node::Var(_) => write!(f, "phi"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Powi(a, n) => write!(f, "({a} ^ {n})"),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Expr, D::Error> {
        let text = String::deserialize(d)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn fail(&self, what: &str) -> Error {
        Error::Parse(format!("{what} at byte {} of expression", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::node(Node::Add(lhs, self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::node(Node::Sub(lhs, self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::node(Node::Mul(lhs, self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::node(Node::Div(lhs, self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(inner.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let negative = self.eat(b'-');
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            let n: i32 = digits.parse().map_err(|_| self.fail("expected integer exponent"))?;
            let n = if negative { -n } else { n };
            return Ok(Expr::node(Node::Powi(base, n)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.fail("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                match name {
                    "theta" => Ok(Expr::theta()),
                    "phi" => Ok(Expr::phi()),
                    "pi" => Ok(Expr::constant(std::f64::consts::PI)),
                    _ => {
                        let func = Func::from_name(name)
                            .ok_or_else(|| self.fail(&format!("unknown name '{name}'")))?;
                        if !self.eat(b'(') {
                            return Err(self.fail("expected '(' after function name"));
                        }
                        let arg = self.expr()?;
                        if !self.eat(b')') {
                            return Err(self.fail("expected ')'"));
                        }
                        Ok(Expr::node(Node::Call(func, arg)))
                    }
                }
            }
            _ => Err(self.fail("unexpected token")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src;
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'-' || bytes[self.pos] == b'+') {
                self.pos += 1;
            }
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        let text = std::str::from_utf8(&bytes[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .map(Expr::constant)
            .map_err(|_| self.fail("malformed number"))
    }
}
