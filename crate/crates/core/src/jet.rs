//! Truncated Taylor series ("jets") for exact derivatives of the multiplier
//! families and the partition bump.
//!
//! A [`Jet`] stores normalized Taylor coefficients `c_k = f^(k)(x0) / k!`.
//! Arithmetic propagates them with the usual recurrences, so derivatives of
//! compositions built from `+ - * /`, `exp`, `ln`, `sin`, `cos` are exact up to
//! rounding.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

pub trait JetScalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Real part, used for branch decisions on piecewise definitions.
    fn real(self) -> f64;
}

impl JetScalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn real(self) -> f64 {
        self
    }
}

impl JetScalar for Complex64 {
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn ln(self) -> Self {
        Complex64::ln(self)
    }
    fn sin(self) -> Self {
        Complex64::sin(self)
    }
    fn cos(self) -> Self {
        Complex64::cos(self)
    }
    fn real(self) -> f64 {
        self.re
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jet<T> {
    coeffs: Vec<T>,
}

impl<T: JetScalar> Jet<T> {
    /// The identity jet `x ↦ x` expanded at `x0` to the given order.
    pub fn variable(x0: T, order: usize) -> Self {
        let mut coeffs = vec![T::from_f64(0.0); order + 1];
        coeffs[0] = x0;
        if order >= 1 {
            coeffs[1] = T::from_f64(1.0);
        }
        Jet { coeffs }
    }

    pub fn constant(c: T, order: usize) -> Self {
        let mut coeffs = vec![T::from_f64(0.0); order + 1];
        coeffs[0] = c;
        Jet { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Derivatives `f^(k)(x0)` for `k = 0..=order`.
    pub fn derivatives(&self) -> Vec<T> {
        let mut fact = 1.0;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                if k > 0 {
                    fact *= k as f64;
                }
                c * T::from_f64(fact)
            })
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Jet {
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: T) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0] + s;
        out
    }

    pub fn recip(&self) -> Self {
        Jet::constant(T::from_f64(1.0), self.order()) / self.clone()
    }

    pub fn exp(&self) -> Self {
        let n = self.coeffs.len();
        let a = &self.coeffs;
        let mut e = vec![T::from_f64(0.0); n];
        e[0] = a[0].exp();
        for k in 1..n {
            let mut acc = T::from_f64(0.0);
            for i in 1..=k {
                acc = acc + T::from_f64(i as f64) * a[i] * e[k - i];
            }
            e[k] = acc / T::from_f64(k as f64);
        }
        Jet { coeffs: e }
    }

    pub fn ln(&self) -> Self {
        let n = self.coeffs.len();
        let a = &self.coeffs;
        let mut l = vec![T::from_f64(0.0); n];
        l[0] = a[0].ln();
        for k in 1..n {
            let mut acc = T::from_f64(0.0);
            for i in 1..k {
                acc = acc + T::from_f64(i as f64) * l[i] * a[k - i];
            }
            l[k] = (a[k] - acc / T::from_f64(k as f64)) / a[0];
        }
        Jet { coeffs: l }
    }

    /// `(sin f, cos f)` computed jointly.
    pub fn sin_cos(&self) -> (Self, Self) {
        let n = self.coeffs.len();
        let a = &self.coeffs;
        let mut s = vec![T::from_f64(0.0); n];
        let mut c = vec![T::from_f64(0.0); n];
        s[0] = a[0].sin();
        c[0] = a[0].cos();
        for k in 1..n {
            let mut acc_s = T::from_f64(0.0);
            let mut acc_c = T::from_f64(0.0);
            for i in 1..=k {
                let w = T::from_f64(i as f64) * a[i];
                acc_s = acc_s + w * c[k - i];
                acc_c = acc_c + w * s[k - i];
            }
            let kk = T::from_f64(k as f64);
            s[k] = acc_s / kk;
            c[k] = -(acc_c / kk);
        }
        (Jet { coeffs: s }, Jet { coeffs: c })
    }

    /// `f^c = exp(c ln f)`.
    pub fn powc(&self, c: T) -> Self {
        self.ln().scale(c).exp()
    }
}

impl<T: JetScalar> Add for Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: Jet<T>) -> Jet<T> {
        Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }
}

impl<T: JetScalar> Sub for Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: Jet<T>) -> Jet<T> {
        Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }
}

impl<T: JetScalar> Neg for Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        Jet {
            coeffs: self.coeffs.iter().map(|&a| -a).collect(),
        }
    }
}

impl<T: JetScalar> Mul for Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Jet<T>) -> Jet<T> {
        let n = self.coeffs.len().min(rhs.coeffs.len());
        let mut out = vec![T::from_f64(0.0); n];
        for k in 0..n {
            let mut acc = T::from_f64(0.0);
            for i in 0..=k {
                acc = acc + self.coeffs[i] * rhs.coeffs[k - i];
            }
            out[k] = acc;
        }
        Jet { coeffs: out }
    }
}

impl<T: JetScalar> Div for Jet<T> {
    type Output = Jet<T>;
    fn div(self, rhs: Jet<T>) -> Jet<T> {
        let n = self.coeffs.len().min(rhs.coeffs.len());
        let b = &rhs.coeffs;
        let mut q = vec![T::from_f64(0.0); n];
        for k in 0..n {
            let mut acc = self.coeffs[k];
            for i in 1..=k {
                acc = acc - b[i] * q[k - i];
            }
            q[k] = acc / b[0];
        }
        Jet { coeffs: q }
    }
}
