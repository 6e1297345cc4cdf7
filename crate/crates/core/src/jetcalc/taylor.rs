//! Degree-2 truncated Taylor arithmetic in `m` variables.
//!
//! A [`Taylor2`] carries a value, its gradient and the packed upper triangle
//! of its Hessian. Every operation propagates all three through the chain
//! rule, so evaluating an [`Expr`] on seeded variables yields exact first and
//! second derivatives up to rounding.

use super::expr::{Expr, Func};
use super::pair_index;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Taylor2 {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Packed `a <= b` entries in lexicographic order.
    pub hess: Vec<f64>,
}

impl Taylor2 {
    pub fn constant(m: usize, value: f64) -> Self {
        Self {
            value,
            grad: vec![0.0; m],
            hess: vec![0.0; m * (m + 1) / 2],
        }
    }

    pub fn variable(m: usize, index: usize, value: f64) -> Self {
        let mut t = Self::constant(m, value);
        t.grad[index] = 1.0;
        t
    }

    fn m(&self) -> usize {
        self.grad.len()
    }

    /// Composition with a scalar function given its value and first two
    /// derivatives at `self.value`.
    fn compose(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let m = self.m();
        let grad = self.grad.iter().map(|g| f1 * g).collect();
        let mut hess = vec![0.0; self.hess.len()];
        for a in 0..m {
            for b in a..m {
                let p = pair_index(m, a, b);
                hess[p] = f1 * self.hess[p] + f2 * self.grad[a] * self.grad[b];
            }
        }
        Self {
            value: f0,
            grad,
            hess,
        }
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            value: self.value + o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a + b).collect(),
        }
    }

    fn neg(&self) -> Self {
        Self {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let m = self.m();
        let (u, v) = (self.value, o.value);
        let grad = (0..m).map(|a| u * o.grad[a] + v * self.grad[a]).collect();
        let mut hess = vec![0.0; self.hess.len()];
        for a in 0..m {
            for b in a..m {
                let p = pair_index(m, a, b);
                hess[p] = u * o.hess[p]
                    + v * self.hess[p]
                    + self.grad[a] * o.grad[b]
                    + o.grad[a] * self.grad[b];
            }
        }
        Self {
            value: u * v,
            grad,
            hess,
        }
    }

    fn recip(&self) -> Result<Self> {
        let v = self.value;
        if v == 0.0 {
            return Err(Error::Domain("division by zero".into()));
        }
        Ok(self.compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v)))
    }

    fn powi(&self, n: i32) -> Result<Self> {
        let v = self.value;
        match n {
            0 => Ok(Self::constant(self.m(), 1.0)),
            1 => Ok(self.clone()),
            _ => {
                if n < 0 && v == 0.0 {
                    return Err(Error::Domain("negative power of zero".into()));
                }
                let nf = n as f64;
                Ok(self.compose(
                    v.powi(n),
                    nf * v.powi(n - 1),
                    nf * (nf - 1.0) * v.powi(n - 2),
                ))
            }
        }
    }

    fn call(&self, f: Func) -> Result<Self> {
        let v = self.value;
        Ok(match f {
            Func::Exp => {
                let e = v.exp();
                self.compose(e, e, e)
            }
            Func::Sin => self.compose(v.sin(), v.cos(), -v.sin()),
            Func::Cos => self.compose(v.cos(), -v.sin(), -v.cos()),
            Func::Log => {
                if v <= 0.0 {
                    return Err(Error::Domain("log of non-positive value".into()));
                }
                self.compose(v.ln(), 1.0 / v, -1.0 / (v * v))
            }
        })
    }
}

/// Evaluates `expr` as a second-order jet at `point`.
pub fn eval_taylor(expr: &Expr, point: &[f64]) -> Result<Taylor2> {
    let m = point.len();
    let r = match expr {
        Expr::Const(c) => Taylor2::constant(m, *c),
        Expr::Var(i) => Taylor2::variable(m, *i, point[*i]),
        Expr::Neg(a) => eval_taylor(a, point)?.neg(),
        Expr::Add(a, b) => eval_taylor(a, point)?.add(&eval_taylor(b, point)?),
        Expr::Sub(a, b) => eval_taylor(a, point)?.add(&eval_taylor(b, point)?.neg()),
        Expr::Mul(a, b) => eval_taylor(a, point)?.mul(&eval_taylor(b, point)?),
        Expr::Div(a, b) => eval_taylor(a, point)?.mul(&eval_taylor(b, point)?.recip()?),
        Expr::Pow(a, n) => eval_taylor(a, point)?.powi(*n)?,
        Expr::Call(f, a) => eval_taylor(a, point)?.call(*f)?,
    };
    Ok(r)
}
