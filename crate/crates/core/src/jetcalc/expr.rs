//! Expression language for map components.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' ['-'] integer)?
//! atom    := number | 'x' index | func '(' sum ')' | '(' sum ')'
//! func    := exp | sin | cos | log
//! ```
//!
//! Variables are `x1..xm`. Exponents must be integer literals.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Largest zero-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Plain value evaluation with the same domain guards as the jet evaluator.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let d = b.eval(x)?;
                if d == 0.0 {
                    return Err(Error::Domain(format!("division by zero at {x:?}")));
                }
                a.eval(x)? / d
            }
            Expr::Pow(a, n) => {
                let v = a.eval(x)?;
                if *n < 0 && v == 0.0 {
                    return Err(Error::Domain(format!("negative power of zero at {x:?}")));
                }
                v.powi(*n)
            }
            Expr::Call(f, a) => {
                let v = a.eval(x)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Log => {
                        if v <= 0.0 {
                            return Err(Error::Domain(format!(
                                "log of non-positive value at {x:?}"
                            )));
                        }
                        v.ln()
                    }
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
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

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '+' => Token::Plus,
            '-' => Token::Minus,
            '*' => Token::Star,
            '/' => Token::Slash,
            '^' => Token::Caret,
            '(' => Token::LParen,
            ')' => Token::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // optional exponent part
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| Error::Syntax(format!("bad number `{text}`")))?;
                out.push(Token::Num(v));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
                continue;
            }
            other => return Err(Error::Syntax(format!("unexpected character `{other}`"))),
        };
        out.push(tok);
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat(&mut self, t: &Token) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(&Token::Plus) {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat(&Token::Minus) {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(&Token::Star) {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(&Token::Slash) {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Token::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(&Token::Plus) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat(&Token::Caret) {
            return Ok(base);
        }
        let parenthesized = self.eat(&Token::LParen);
        let negative = self.eat(&Token::Minus);
        let n = match self.next() {
            Some(Token::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => v as i32,
            other => {
                return Err(Error::Syntax(format!(
                    "exponent must be an integer literal, found {other:?}"
                )))
            }
        };
        if parenthesized && !self.eat(&Token::RParen) {
            return Err(Error::Syntax("missing `)` after exponent".into()));
        }
        Ok(Expr::Pow(Box::new(base), if negative { -n } else { n }))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.sum()?;
                if !self.eat(&Token::RParen) {
                    return Err(Error::Syntax("missing `)`".into()));
                }
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                let func = match name.as_str() {
                    "exp" => Some(Func::Exp),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "log" => Some(Func::Log),
                    _ => None,
                };
                if let Some(f) = func {
                    if !self.eat(&Token::LParen) {
                        return Err(Error::Syntax(format!("expected `(` after `{name}`")));
                    }
                    let arg = self.sum()?;
                    if !self.eat(&Token::RParen) {
                        return Err(Error::Syntax(format!("missing `)` in call to `{name}`")));
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                match name.strip_prefix('x').map(str::parse::<usize>) {
                    Some(Ok(k)) if k >= 1 => Ok(Expr::Var(k - 1)),
                    Some(Ok(_)) => Err(Error::Arity(format!("unknown variable `{name}`"))),
                    _ => Err(Error::Syntax(format!("unknown identifier `{name}`"))),
                }
            }
            Some(t) => Err(Error::Syntax(format!("unexpected token {t:?}"))),
            None => Err(Error::Syntax("unexpected end of expression".into())),
        }
    }
}

/// Parses one expression. Variable bounds are checked by the caller.
pub fn parse_expr(src: &str) -> Result<Expr> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(Error::Syntax("empty expression".into()));
    }
    let mut p = Parser { tokens, pos: 0 };
    let e = p.sum()?;
    if let Some(t) = p.peek() {
        return Err(Error::Syntax(format!("trailing input at {t:?}")));
    }
    Ok(e)
}

/// Parses a `;`-separated list of expressions in variables `x1..xm`.
/// A single trailing `;` is accepted.
pub fn parse_expr_list(src: &str, m: usize) -> Result<Vec<Expr>> {
    let mut parts: Vec<&str> = src.split(';').collect();
    while parts.len() > 1 && parts.last().is_some_and(|s| s.trim().is_empty()) {
        parts.pop();
    }
    parts
        .into_iter()
        .map(|p| {
            let e = parse_expr(p)?;
            if let Some(v) = e.max_var() {
                if v >= m {
                    return Err(Error::Arity(format!(
                        "variable x{} out of range for m = {m}",
                        v + 1
                    )));
                }
            }
            Ok(e)
        })
        .collect()
}
