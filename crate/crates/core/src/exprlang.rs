//! A small closed grammar for scalar functions of the four coordinates.
//!
//! ```text
//! expr    := signed (('+' | '-') signed)*
//! signed  := '-' signed | term
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | power
//! power   := primary ('^' exponent)*
//! exponent:= number | '-' number | '(' '-'? number ')'
//! primary := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers `x0`..`x3` are coordinates, `sin cos exp log sqrt tanh` are
//! functions, anything else is a named parameter bound at evaluation time.
//! A minus leading a term negates the whole product (`-a*b` is `-(a*b)`);
//! a minus after `*` or `/` negates only its factor.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Named parameter values.
pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

    pub fn name(self) -> &'static str {
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(usize),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at line {line}, column {column}: expected one of {expected:?}, found {found}")]
pub struct SyntaxError {
    /// Byte offset into the source.
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("domain error: {op} of {arg}")]
    DomainError { op: String, arg: f64 },
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, SyntaxError> {
        let mut p = Parser { src: source, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < source.len() {
            return Err(p.error(&["operator", "end of input"]));
        }
        Ok(e)
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Evaluates at `coords` with the given parameter bindings.
    pub fn eval(&self, coords: &[f64; 4], params: &Params) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Coord(i) => coords[*i],
            Expr::Param(name) => *params
                .get(name)
                .ok_or_else(|| EvalError::UnboundParameter(name.clone()))?,
            Expr::Neg(e) => -e.eval(coords, params)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(coords, params)?;
                let b = r.eval(coords, params)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(domain("division", b));
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(base, p) => {
                let b = base.eval(coords, params)?;
                if b < 0.0 && p.fract() != 0.0 {
                    return Err(domain("fractional power", b));
                }
                if b == 0.0 && *p < 0.0 {
                    return Err(domain("negative power", b));
                }
                if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                    b.powi(*p as i32)
                } else {
                    b.powf(*p)
                }
            }
            Expr::Call(f, arg) => {
                let x = arg.eval(coords, params)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Tanh => x.tanh(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(domain("log", x));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain("sqrt", x));
                        }
                        x.sqrt()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain("overflow", v))
        }
    }

    /// Central-difference gradient with a fixed step on every axis.
    pub fn eval_grad(
        &self,
        coords: &[f64; 4],
        params: &Params,
        step: f64,
    ) -> Result<[f64; 4], EvalError> {
        self.eval_grad_with(coords, params, |_| step)
    }

    /// Central-difference gradient with the default step `1e-6 * max(1, |x|)` per axis.
    pub fn eval_grad_default(&self, coords: &[f64; 4], params: &Params) -> Result<[f64; 4], EvalError> {
        self.eval_grad_with(coords, params, |x| default_step(x))
    }

    fn eval_grad_with(
        &self,
        coords: &[f64; 4],
        params: &Params,
        step: impl Fn(f64) -> f64,
    ) -> Result<[f64; 4], EvalError> {
        let mut g = [0.0; 4];
        if let Expr::Num(_) = self {
            return Ok(g);
        }
        for (mu, gm) in g.iter_mut().enumerate() {
            if !self.uses_coord(mu) {
                continue;
            }
            let h = step(coords[mu]);
            let mut xp = *coords;
            let mut xm = *coords;
            xp[mu] += h;
            xm[mu] -= h;
            *gm = (self.eval(&xp, params)? - self.eval(&xm, params)?) / (2.0 * h);
        }
        Ok(g)
    }

    pub fn uses_coord(&self, mu: usize) -> bool {
        match self {
            Expr::Coord(i) => *i == mu,
            Expr::Num(_) | Expr::Param(_) => false,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.uses_coord(mu),
            Expr::Bin(_, l, r) => l.uses_coord(mu) || r.uses_coord(mu),
        }
    }

    /// Names of all parameters referenced by the expression.
    pub fn free_params(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Param(n) => {
                    if !out.contains(n) {
                        out.push(n.clone());
                    }
                }
                Expr::Num(_) | Expr::Coord(_) => {}
                Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => walk(e, out),
                Expr::Bin(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

/// Default finite-difference step for a coordinate value.
pub fn default_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

fn domain(op: &str, arg: f64) -> EvalError {
    EvalError::DomainError { op: op.to_string(), arg }
}

fn fmt_num(v: f64) -> String {
    // `{:?}` prints the shortest representation that round-trips.
    format!("{v:?}")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{}", fmt_num(*v)),
            Expr::Coord(i) => write!(f, "x{i}"),
            Expr::Param(n) => write!(f, "{n}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Pow(b, p) => {
                let base = match **b {
                    Expr::Coord(_) | Expr::Param(_) | Expr::Call(..) => b.to_string(),
                    Expr::Num(v) => format!("({})", fmt_num(v)),
                    _ => format!("({b})"),
                };
                if *p < 0.0 {
                    write!(f, "{base}^({})", fmt_num(*p))
                } else {
                    write!(f, "{base}^{}", fmt_num(*p))
                }
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let before = &self.src[..self.pos];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        let found = match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".to_string(),
        };
        SyntaxError {
            offset: self.pos,
            line,
            column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.signed()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.signed()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn signed(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.signed()?)))
        } else {
            self.term()
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.factor()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let mut base = self.primary()?;
        while self.eat('^') {
            let p = self.exponent()?;
            base = Expr::Pow(Box::new(base), p);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<f64, SyntaxError> {
        if self.eat('(') {
            let neg = self.eat('-');
            let v = self.number()?.ok_or_else(|| self.error(&["number"]))?;
            if !self.eat(')') {
                return Err(self.error(&["`)`"]));
            }
            return Ok(if neg { -v } else { v });
        }
        let neg = self.eat('-');
        let v = self
            .number()?
            .ok_or_else(|| self.error(&["number", "`(`", "`-`"]))?;
        Ok(if neg { -v } else { v })
    }

    fn number(&mut self) -> Result<Option<f64>, SyntaxError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let bytes = rest.as_bytes();
        let mut i = 0;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i == 0 {
            return Ok(None);
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            let digits_start = j;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j > digits_start {
                i = j;
            }
        }
        let text = &rest[..i];
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos += i;
                Ok(Some(v))
            }
            Err(_) => Err(self.error(&["number"])),
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_'
            };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        if end == 0 {
            return None;
        }
        self.pos += end;
        Some(&rest[..end])
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        if let Some(v) = self.number()? {
            return Ok(Expr::Num(v));
        }
        if self.eat('(') {
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error(&["`)`", "operator"]));
            }
            return Ok(e);
        }
        let start = self.pos;
        if let Some(name) = self.ident() {
            if let Some(func) = Func::from_name(name) {
                if !self.eat('(') {
                    return Err(self.error(&["`(`"]));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(&["`)`", "operator"]));
                }
                return Ok(Expr::Call(func, Box::new(arg)));
            }
            return Ok(match name {
                "x0" => Expr::Coord(0),
                "x1" => Expr::Coord(1),
                "x2" => Expr::Coord(2),
                "x3" => Expr::Coord(3),
                _ => Expr::Param(name.to_string()),
            });
        }
        self.pos = start;
        Err(self.error(&["number", "identifier", "`(`", "`-`"]))
    }
}
