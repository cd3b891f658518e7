//! A small arithmetic language for user-supplied kernels.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' digits | 'r' | func '(' expr ')' | '(' expr ')'
//! func   := 'abs' | 'sqrt' | 'norm'
//! ```
//!
//! `x0, x1, ...` are the coordinates of `z = x - y`, `r` is `|z|`, and
//! `norm(e)` is `|e|` (same as `abs` for scalars).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(usize),
    Radius,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!("unexpected trailing input in {src:?}")));
        }
        Ok(e)
    }

    /// Highest coordinate index referenced, if any.
    pub fn max_coord(&self) -> Option<usize> {
        use Expr::*;
        match self {
            Num(_) | Radius => None,
            Coord(i) => Some(*i),
            Neg(a) | Abs(a) | Sqrt(a) => a.max_coord(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                match (a.max_coord(), b.max_coord()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        use Expr::*;
        match self {
            Num(v) => *v,
            Coord(i) => z[*i],
            Radius => z.iter().map(|c| c * c).sum::<f64>().sqrt(),
            Neg(a) => -a.eval(z),
            Add(a, b) => a.eval(z) + b.eval(z),
            Sub(a, b) => a.eval(z) - b.eval(z),
            Mul(a, b) => a.eval(z) * b.eval(z),
            Div(a, b) => a.eval(z) / b.eval(z),
            Pow(a, b) => {
                let (base, e) = (a.eval(z), b.eval(z));
                if e.fract() == 0.0 && e.abs() < 64.0 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Abs(a) => a.eval(z).abs(),
            Sqrt(a) => a.eval(z).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part, e.g. 1e-3
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number {s:?}")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()×÷−".contains(c) {
            let op = match c {
                '×' => '*',
                '÷' => '/',
                '−' => '-',
                other => other,
            };
            out.push(Tok::Op(op));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expr(format!("expected {c:?}")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expr("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "r" => Ok(Expr::Radius),
                "abs" | "sqrt" | "norm" => {
                    self.expect('(')?;
                    let e = self.expr()?;
                    self.expect(')')?;
                    Ok(if name == "sqrt" {
                        Expr::Sqrt(Box::new(e))
                    } else {
                        Expr::Abs(Box::new(e))
                    })
                }
                s if s.starts_with('x') && s.len() > 1 && s[1..].chars().all(|c| c.is_ascii_digit()) => {
                    Ok(Expr::Coord(s[1..].parse().expect("digits")))
                }
                other => Err(Error::Expr(format!("unknown identifier {other:?}"))),
            },
            Tok::Op(c) => Err(Error::Expr(format!("unexpected operator {c:?}"))),
        }
    }
}
