//! Truncated Taylor series arithmetic.
//!
//! `Series<N>` holds the first `N` Taylor coefficients of a function about a
//! fixed expansion point. The closed-form coefficient functions in this crate
//! are written generically over [`Scalar`], so the exact same expression code
//! evaluates either to a number (`f64`) or to its local Taylor expansion
//! (`Series<N>`); local expansions therefore never need separate, error-prone
//! transcriptions of derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic abstraction shared by plain numbers and truncated Taylor series.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;

    fn powi(self, n: i32) -> Self {
        assert!(n >= 1);
        let mut acc = self;
        for _ in 1..n {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
}

/// First `N` Taylor coefficients about an implicit expansion point:
/// `f(x0 + s) = c[0] + c[1] s + ... + c[N-1] s^{N-1} + O(s^N)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Series<const N: usize> {
    pub c: [f64; N],
}

impl<const N: usize> Series<N> {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        Series { c }
    }

    /// The identity function `x = x0 + s` expanded about `x0`.
    pub fn var(x0: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = x0;
        if N > 1 {
            c[1] = 1.0;
        }
        Series { c }
    }

    /// The reflected variable `x = x0 - s` (series in `s` running downward from `x0`).
    pub fn var_reflected(x0: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = x0;
        if N > 1 {
            c[1] = -1.0;
        }
        Series { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Coefficient-wise derivative with respect to the local variable.
    pub fn derivative(&self) -> Self {
        let mut c = [0.0; N];
        for k in 1..N {
            c[k - 1] = self.c[k] * k as f64;
        }
        Series { c }
    }

    /// Evaluate the truncated polynomial at local offset `s`.
    pub fn eval(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for k in (0..N).rev() {
            acc = acc * s + self.c[k];
        }
        acc
    }

    /// Square root of a series with positive constant term.
    pub fn sqrt(&self) -> Self {
        assert!(self.c[0] > 0.0, "series sqrt needs a positive leading term");
        let mut b = [0.0; N];
        b[0] = self.c[0].sqrt();
        for n in 1..N {
            let mut conv = 0.0;
            for k in 1..n {
                conv += b[k] * b[n - k];
            }
            b[n] = (self.c[n] - conv) / (2.0 * b[0]);
        }
        Series { c: b }
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn recip(&self) -> Self {
        assert!(self.c[0] != 0.0, "series inverse needs a nonzero leading term");
        let mut b = [0.0; N];
        b[0] = 1.0 / self.c[0];
        for n in 1..N {
            let mut conv = 0.0;
            for k in 1..=n {
                conv += self.c[k] * b[n - k];
            }
            b[n] = -conv / self.c[0];
        }
        Series { c: b }
    }
}

impl<const N: usize> Add for Series<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.c;
        for k in 0..N {
            c[k] += rhs.c[k];
        }
        Series { c }
    }
}

impl<const N: usize> Sub for Series<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.c;
        for k in 0..N {
            c[k] -= rhs.c[k];
        }
        Series { c }
    }
}

impl<const N: usize> Neg for Series<N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut c = self.c;
        for x in c.iter_mut() {
            *x = -*x;
        }
        Series { c }
    }
}

impl<const N: usize> Mul for Series<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; N];
        for i in 0..N {
            if self.c[i] == 0.0 {
                continue;
            }
            for j in 0..N - i {
                c[i + j] += self.c[i] * rhs.c[j];
            }
        }
        Series { c }
    }
}

impl<const N: usize> Div for Series<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<const N: usize> Scalar for Series<N> {
    fn from_f64(x: f64) -> Self {
        Series::constant(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_analytic_expansion() {
        // f(x) = 1/x about x0=2: coefficients (-1)^k / 2^{k+1}
        let x = Series::<8>::var(2.0);
        let f = Series::constant(1.0) / x;
        for k in 0..8 {
            let expect = (-1.0f64).powi(k as i32) / 2.0f64.powi(k as i32 + 1);
            assert!((f.c[k] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let x = Series::<10>::var(0.3);
        let f = Series::constant(1.0) + x * x;
        let r = f.sqrt();
        let back = r * r;
        for k in 0..10 {
            assert!((back.c[k] - f.c[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_shifts() {
        let x = Series::<6>::var(1.0);
        let f = x * x * x; // x^3 about 1
        let d = f.derivative();
        // d should be 3x^2 about 1: 3, 6, 3, 0...
        assert!((d.c[0] - 3.0).abs() < 1e-14);
        assert!((d.c[1] - 6.0).abs() < 1e-14);
        assert!((d.c[2] - 3.0).abs() < 1e-14);
    }
}
