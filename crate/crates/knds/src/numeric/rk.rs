//! Embedded Dormand-Prince 5(4) integrator over small complex state vectors.

use num_complex::Complex64;

/// Right-hand side of `y' = f(x, y)` for an `N`-component complex system.
pub trait Rhs<const N: usize> {
    fn eval(&self, x: f64, y: &[Complex64; N]) -> [Complex64; N];
}

impl<F, const N: usize> Rhs<N> for F
where
    F: Fn(f64, &[Complex64; N]) -> [Complex64; N],
{
    fn eval(&self, x: f64, y: &[Complex64; N]) -> [Complex64; N] {
        self(x, y)
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate from `x0` to `x1` (either direction) with relative tolerance `rel`
/// and absolute tolerance `abs`. Returns the final state or `None` if the step
/// size underflows.
pub fn integrate<const N: usize, R: Rhs<N>>(
    rhs: &R,
    x0: f64,
    x1: f64,
    y0: [Complex64; N],
    rel: f64,
    abs: f64,
) -> Option<[Complex64; N]> {
    let span = x1 - x0;
    if span == 0.0 {
        return Some(y0);
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = (span.abs() * 0.01).max(1e-10) * dir;
    let h_min = span.abs() * 1e-14;
    let mut k1 = rhs.eval(x, &y);
    let max_steps = 2_000_000u64;
    let mut steps = 0u64;

    while (x1 - x) * dir > 0.0 {
        steps += 1;
        if steps > max_steps {
            return None;
        }
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        let mut k = [[Complex64::default(); N]; 7];
        k[0] = k1;
        for stage in 0..6 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(stage + 1) {
                let a = A[stage][j];
                if a != 0.0 {
                    for c in 0..N {
                        yi[c] += kj[c] * (a * h);
                    }
                }
            }
            k[stage + 1] = rhs.eval(x + C[stage] * h, &yi);
        }
        let mut y5 = y;
        let mut err: f64 = 0.0;
        let mut e = [Complex64::default(); N];
        for (j, kj) in k.iter().enumerate() {
            for c in 0..N {
                y5[c] += kj[c] * (B5[j] * h);
                e[c] += kj[c] * ((B5[j] - B4[j]) * h);
            }
        }
        for c in 0..N {
            let scale = abs + rel * y5[c].norm().max(y[c].norm());
            err = err.max(e[c].norm() / scale);
        }
        if err <= 1.0 {
            x += h;
            y = y5;
            k1 = k[6]; // FSAL
        }
        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h.abs() < h_min && (x1 - x) * dir > 0.0 {
            return None;
        }
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential() {
        let rhs = |_x: f64, y: &[Complex64; 1]| [y[0] * Complex64::new(0.0, 1.0)];
        let y = integrate(&rhs, 0.0, 2.0, [Complex64::new(1.0, 0.0)], 1e-11, 1e-14).unwrap();
        let exact = Complex64::new(0.0, 2.0).exp();
        assert!((y[0] - exact).norm() < 1e-9);
    }

    #[test]
    fn backward_direction() {
        let rhs = |x: f64, _y: &[Complex64; 1]| [Complex64::new(2.0 * x, 0.0)];
        let y = integrate(&rhs, 2.0, 1.0, [Complex64::new(4.0, 0.0)], 1e-12, 1e-14).unwrap();
        assert!((y[0].re - 1.0).abs() < 1e-10);
    }
}
