//! Real scalars and forward-mode dual numbers.
//!
//! Everything that feeds the stationarity residual or the flow speed is
//! written against [`Scalar`], so the same code path evaluates plain values
//! and exact partial derivatives.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn pow(self, rhs: Self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn pow(self, rhs: Self) -> Self {
        pow_f64(self, rhs)
    }
}

/// `powf` with exact integer exponents, so that `(-2)^3` and `x^2` behave
/// as expected.
#[inline]
pub(crate) fn pow_f64(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

/// Dual number carrying `K` directional derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const K: usize> {
    pub re: f64,
    pub eps: [f64; K],
}

impl<const K: usize> Dual<K> {
    pub fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; K] }
    }

    /// A seeded variable: derivative 1 in slot `slot`.
    pub fn variable(re: f64, slot: usize) -> Self {
        let mut eps = [0.0; K];
        eps[slot] = 1.0;
        Self { re, eps }
    }

    #[inline]
    fn chain(self, re: f64, d: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= d;
        }
        Self { re, eps }
    }
}

impl<const K: usize> Add for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (a, b) in eps.iter_mut().zip(o.eps) {
            *a += b;
        }
        Self {
            re: self.re + o.re,
            eps,
        }
    }
}

impl<const K: usize> Sub for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (a, b) in eps.iter_mut().zip(o.eps) {
            *a -= b;
        }
        Self {
            re: self.re - o.re,
            eps,
        }
    }
}

impl<const K: usize> Mul for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut eps = [0.0; K];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = self.eps[k] * o.re + self.re * o.eps[k];
        }
        Self {
            re: self.re * o.re,
            eps,
        }
    }
}

impl<const K: usize> Div for Dual<K> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.re;
        let re = self.re * inv;
        let mut eps = [0.0; K];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = (self.eps[k] - re * o.eps[k]) * inv;
        }
        Self { re, eps }
    }
}

impl<const K: usize> Neg for Dual<K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.re, -1.0)
    }
}

impl<const K: usize> Scalar for Dual<K> {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn abs(self) -> Self {
        let s = if self.re < 0.0 { -1.0 } else { 1.0 };
        self.chain(self.re.abs(), s)
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, 0.5 / r)
    }
    fn pow(self, rhs: Self) -> Self {
        let re = pow_f64(self.re, rhs.re);
        let exponent_is_const = rhs.eps.iter().all(|&e| e == 0.0);
        let mut eps = [0.0; K];
        if exponent_is_const {
            let d = if rhs.re == 0.0 {
                0.0
            } else {
                rhs.re * pow_f64(self.re, rhs.re - 1.0)
            };
            for (k, e) in eps.iter_mut().enumerate() {
                *e = d * self.eps[k];
            }
        } else {
            let ln_base = self.re.ln();
            for (k, e) in eps.iter_mut().enumerate() {
                *e = re * (rhs.eps[k] * ln_base + rhs.re * self.eps[k] / self.re);
            }
        }
        Self { re, eps }
    }
}
