//! Chebyshev-Gauss-Lobatto grids and spectral differentiation.

use nalgebra::DMatrix;

/// `n+1` Chebyshev-Gauss-Lobatto points mapped to `[a, b]`, in increasing order.
pub fn lobatto_points(n: usize, a: f64, b: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=n)
        .map(|j| {
            let t = (std::f64::consts::PI * j as f64 / n as f64).cos(); // 1 -> -1
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect();
    pts.reverse();
    pts
}

/// First-order spectral differentiation matrix on the increasing-order Lobatto
/// grid returned by [`lobatto_points`].
pub fn diff_matrix(n: usize, a: f64, b: f64) -> DMatrix<f64> {
    // Standard Chebyshev differentiation matrix on x_j = cos(pi j / n),
    // then reorder to the increasing grid and rescale to [a, b].
    let np = n + 1;
    let x: Vec<f64> = (0..=n)
        .map(|j| (std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect();
    let c = |i: usize| -> f64 {
        let ci = if i == 0 || i == n { 2.0 } else { 1.0 };
        ci * if i % 2 == 0 { 1.0 } else { -1.0 }
    };
    let mut d = DMatrix::<f64>::zeros(np, np);
    for i in 0..np {
        for j in 0..np {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    for i in 0..np {
        let mut row_sum = 0.0;
        for j in 0..np {
            if i != j {
                row_sum += d[(i, j)];
            }
        }
        d[(i, i)] = -row_sum; // negative-sum trick for the diagonal
    }
    // Reorder both axes to increasing x and apply the affine chain rule.
    let scale = 2.0 / (b - a);
    let mut out = DMatrix::<f64>::zeros(np, np);
    for i in 0..np {
        for j in 0..np {
            out[(n - i, n - j)] = d[(i, j)] * scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differentiates_smooth_function() {
        let n = 24;
        let (a, b) = (1.0, 3.0);
        let pts = lobatto_points(n, a, b);
        let d = diff_matrix(n, a, b);
        let f: Vec<f64> = pts.iter().map(|&x| (2.0 * x).sin()).collect();
        for i in 0..=n {
            let mut df = 0.0;
            for j in 0..=n {
                df += d[(i, j)] * f[j];
            }
            let exact = 2.0 * (2.0 * pts[i]).cos();
            assert!((df - exact).abs() < 1e-9, "i={} err={}", i, (df - exact).abs());
        }
    }
}
