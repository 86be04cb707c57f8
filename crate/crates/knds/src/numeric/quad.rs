//! Adaptive Simpson quadrature.

/// Integrate `f` over `[a, b]` to the requested relative/absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64, abs: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, rel, abs, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    rel: f64,
    abs: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * (abs + rel * (left + right).abs()) {
        left + right + err / 15.0
    } else {
        // Halve only the absolute budget: the relative test must stay
        // proportional to the local integral, or roundoff-dominated panels
        // (error ~ width, threshold ~ width^2) subdivide without bound.
        recurse(f, a, m, fa, flm, fm, left, rel, abs * 0.5, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, rel, abs * 0.5, depth - 1)
    }
}
