//! Polynomial roots via the companion matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// All complex roots of `c[0] + c[1] x + ... + c[n] x^n` (leading coefficient
/// nonzero). Computed as the eigenvalues of the companion matrix.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    assert!(n >= 1, "need degree >= 1");
    let lead = coeffs[n];
    assert!(lead != 0.0, "leading coefficient must be nonzero");
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -coeffs[i] / lead;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Newton polish of a root of the polynomial (Horner evaluation of value and
/// derivative); returns the refined root.
pub fn polish_real_root(coeffs: &[f64], x0: f64, iters: usize) -> f64 {
    let mut x = x0;
    for _ in 0..iters {
        let (p, dp) = horner_with_derivative(coeffs, x);
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        x -= step;
        if step.abs() <= 1e-16 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

pub fn horner_with_derivative(coeffs: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}
