//! Scalar abstraction shared by the plain `f64` dynamics and the truncated
//! Taylor-series evaluation used for Lie derivatives.

use std::ops::{Add, Mul, Neg, Sub};

/// Arithmetic needed by the reactor right-hand side.
pub trait Real:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// A constant of the same shape as `self`.
    fn lift(&self, c: f64) -> Self;
    fn scale(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn recip(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn lift(&self, c: f64) -> Self {
        c
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
}

/// Truncated power series `sum_k c[k] t^k`, all operands share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub c: Vec<f64>,
}

impl Series {
    pub fn constant(value: f64, len: usize) -> Self {
        let mut c = vec![0.0; len];
        c[0] = value;
        Self { c }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    fn zip(self, rhs: Series, op: impl Fn(f64, f64) -> f64) -> Series {
        debug_assert_eq!(self.c.len(), rhs.c.len());
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(rhs.c) {
            *a = op(*a, b);
        }
        Series { c }
    }
}

impl Add for Series {
    type Output = Series;
    fn add(self, rhs: Series) -> Series {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(self, rhs: Series) -> Series {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Neg for Series {
    type Output = Series;
    fn neg(mut self) -> Series {
        self.c.iter_mut().for_each(|a| *a = -*a);
        self
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, rhs: Series) -> Series {
        let n = self.c.len();
        let mut c = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = (0..=k).map(|j| self.c[j] * rhs.c[k - j]).sum();
        }
        Series { c }
    }
}

impl Real for Series {
    fn lift(&self, c: f64) -> Self {
        Series::constant(c, self.c.len())
    }

    fn scale(mut self, s: f64) -> Self {
        self.c.iter_mut().for_each(|a| *a *= s);
        self
    }

    // e' = a' e  =>  m e_m = sum_{j=1}^{m} j a_j e_{m-j}
    fn exp(self) -> Self {
        let a = &self.c;
        let n = a.len();
        let mut e = vec![0.0; n];
        e[0] = a[0].exp();
        for m in 1..n {
            let s: f64 = (1..=m).map(|j| j as f64 * a[j] * e[m - j]).sum();
            e[m] = s / m as f64;
        }
        Series { c: e }
    }

    // a b = 1  =>  b_m = -(1/a_0) sum_{j=1}^{m} a_j b_{m-j}
    fn recip(self) -> Self {
        let a = &self.c;
        let n = a.len();
        let mut b = vec![0.0; n];
        b[0] = 1.0 / a[0];
        for m in 1..n {
            let s: f64 = (1..=m).map(|j| a[j] * b[m - j]).sum();
            b[m] = -s * b[0];
        }
        Series { c: b }
    }
}

/// A Taylor series together with its derivatives with respect to a set of
/// seed variables (forward-mode differentiation of the series coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub v: Series,
    pub d: Vec<Series>,
}

impl Jet {
    pub fn constant(value: f64, len: usize, seeds: usize) -> Self {
        Self { v: Series::constant(value, len), d: vec![Series::constant(0.0, len); seeds] }
    }

    /// The `i`-th seed variable with value `value`.
    pub fn variable(value: f64, len: usize, seeds: usize, i: usize) -> Self {
        let mut j = Self::constant(value, len, seeds);
        j.d[i].c[0] = 1.0;
        j
    }

    fn map_d(self, other: Jet, op: impl Fn(Series, Series) -> Series) -> Vec<Series> {
        self.d.into_iter().zip(other.d).map(|(a, b)| op(a, b)).collect()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let v = self.v.clone() + rhs.v.clone();
        Jet { v, d: self.map_d(rhs, |a, b| a + b) }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let v = self.v.clone() - rhs.v.clone();
        Jet { v, d: self.map_d(rhs, |a, b| a - b) }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d: self.d.into_iter().map(|a| -a).collect() }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let v = self.v.clone() * rhs.v.clone();
        let d = self
            .d
            .into_iter()
            .zip(rhs.d)
            .map(|(da, db)| da * rhs.v.clone() + self.v.clone() * db)
            .collect();
        Jet { v, d }
    }
}

impl Real for Jet {
    fn lift(&self, c: f64) -> Self {
        Jet::constant(c, self.v.len(), self.d.len())
    }

    fn scale(self, s: f64) -> Self {
        Jet { v: self.v.scale(s), d: self.d.into_iter().map(|a| a.scale(s)).collect() }
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        let d = self.d.into_iter().map(|a| a * e.clone()).collect();
        Jet { v: e, d }
    }

    fn recip(self) -> Self {
        let r = self.v.recip();
        let r2 = -(r.clone() * r.clone());
        let d = self.d.into_iter().map(|a| a * r2.clone()).collect();
        Jet { v: r, d }
    }
}
