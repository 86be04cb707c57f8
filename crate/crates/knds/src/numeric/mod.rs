//! Shared numerical kernels: truncated Taylor arithmetic, adaptive quadrature,
//! an embedded Runge-Kutta integrator over complex state, Chebyshev grids, and
//! polynomial root finding via companion matrices.

pub mod cheby;
pub mod quad;
pub mod rk;
pub mod roots;
pub mod series;

pub use series::{Scalar, Series};

/// `n` evenly spaced points on `[a, b]` including both endpoints (`n >= 2`).
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + h * i as f64).collect()
}

/// `n` interior points of `(a, b)`: endpoints excluded, evenly spaced.
pub fn interior_linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n + 1) as f64;
    (1..=n).map(|i| a + h * i as f64).collect()
}
