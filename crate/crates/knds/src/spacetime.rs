//! Reissner-Nordstrom-de Sitter background geometry: the metric coefficient
//! mu(r), horizon structure and classification, surface gravities, the photon
//! sphere, the everywhere-timelike t* gauge, and slowly rotating horizons.

use crate::error::{Error, Result};
use crate::numeric::roots::{horner_with_derivative, poly_roots, polish_real_root};
use crate::numeric::{quad, Scalar, Series};
use serde::{Deserialize, Serialize};

/// Black-hole parameter tuple: cosmological constant, mass, spin vector,
/// electric and magnetic charge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlackHoleParams {
    pub lambda: f64,
    pub mass: f64,
    pub spin: [f64; 3],
    pub charge_e: f64,
    pub charge_m: f64,
}

impl BlackHoleParams {
    pub fn new(lambda: f64, mass: f64, spin: [f64; 3], charge_e: f64, charge_m: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Domain(format!("mass must be positive, got {mass}")));
        }
        Ok(BlackHoleParams { lambda, mass, spin, charge_e, charge_m })
    }

    /// Non-rotating parameters.
    pub fn static_params(lambda: f64, mass: f64, charge_e: f64, charge_m: f64) -> Result<Self> {
        Self::new(lambda, mass, [0.0; 3], charge_e, charge_m)
    }

    /// Effective squared charge entering mu: electric and magnetic charge only
    /// appear through this duality-invariant combination.
    pub fn q2(&self) -> f64 {
        self.charge_e * self.charge_e + self.charge_m * self.charge_m
    }

    /// Effective (nonnegative) charge.
    pub fn q_eff(&self) -> f64 {
        self.q2().sqrt()
    }

    pub fn spin_mag(&self) -> f64 {
        (self.spin[0] * self.spin[0] + self.spin[1] * self.spin[1] + self.spin[2] * self.spin[2])
            .sqrt()
    }
}

/// mu and its derivatives as one generic expression, usable with plain numbers
/// or truncated Taylor series.
pub fn mu_generic<T: Scalar>(p: &BlackHoleParams, r: T) -> T {
    let one = T::from_f64(1.0);
    let two_m = T::from_f64(2.0 * p.mass);
    let l3 = T::from_f64(p.lambda / 3.0);
    let q2 = T::from_f64(p.q2());
    one - two_m / r.clone() - l3 * r.clone() * r.clone() + q2 / (r.clone() * r)
}

/// mu(r) = 1 - 2m/r - Lambda r^2/3 + Q^2/r^2.
pub fn mu(p: &BlackHoleParams, r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(Error::Domain(format!("mu needs r > 0, got {r}")));
    }
    Ok(mu_generic(p, r))
}

/// First derivative mu'(r).
pub fn mu_prime(p: &BlackHoleParams, r: f64) -> f64 {
    2.0 * p.mass / (r * r) - 2.0 * p.lambda * r / 3.0 - 2.0 * p.q2() / (r * r * r)
}

/// Second derivative mu''(r).
pub fn mu_pp(p: &BlackHoleParams, r: f64) -> f64 {
    -4.0 * p.mass / (r * r * r) - 2.0 * p.lambda / 3.0 + 6.0 * p.q2() / (r * r * r * r)
}

/// Why a parameter tuple fails the simple-horizon classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegenerateReason {
    /// 9 m^2 - 8 Q^2 <= 0: no photon-sphere root pair.
    NegativeDiscriminant,
    /// Lambda at or below the lower admissibility bound.
    LambdaLow,
    /// Lambda at or above the upper admissibility bound.
    LambdaHigh,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Classification {
    Nondegenerate,
    Degenerate(DegenerateReason),
}

impl Classification {
    pub fn is_nondegenerate(&self) -> bool {
        matches!(self, Classification::Nondegenerate)
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Nondegenerate => write!(f, "nondegenerate"),
            Classification::Degenerate(DegenerateReason::NegativeDiscriminant) => {
                write!(f, "degenerate(discriminant)")
            }
            Classification::Degenerate(DegenerateReason::LambdaLow) => {
                write!(f, "degenerate(lambda-low)")
            }
            Classification::Degenerate(DegenerateReason::LambdaHigh) => {
                write!(f, "degenerate(lambda-high)")
            }
        }
    }
}

/// Closed-form classification of (lambda, mass, charge): nondegenerate iff the
/// quartic r^2 mu has three simple positive roots with a nondegenerate interior
/// maximum of r^-2 mu between the top two.
///
/// For Q = 0 the condition reduces to 0 < 9 lambda m^2 < 1 strictly; for Q != 0
/// it is D := 9m^2 - 8Q^2 > 0 together with
/// max(0, 6(m - sqrt(D)) / (3m - sqrt(D))^3) < lambda < 6(m + sqrt(D)) / (3m + sqrt(D))^3.
pub fn classify_nondegenerate(lambda: f64, mass: f64, charge: f64) -> Result<Classification> {
    if !(lambda > 0.0) || !(mass > 0.0) {
        return Err(Error::Domain(format!(
            "classification needs lambda > 0 and mass > 0, got lambda={lambda} mass={mass}"
        )));
    }
    if charge == 0.0 {
        let v = 9.0 * lambda * mass * mass;
        return Ok(if v < 1.0 {
            Classification::Nondegenerate
        } else {
            Classification::Degenerate(DegenerateReason::LambdaHigh)
        });
    }
    let d = 9.0 * mass * mass - 8.0 * charge * charge;
    if d <= 0.0 {
        return Ok(Classification::Degenerate(DegenerateReason::NegativeDiscriminant));
    }
    let sd = d.sqrt();
    let lower = (6.0 * (mass - sd) / (3.0 * mass - sd).powi(3)).max(0.0);
    let upper = 6.0 * (mass + sd) / (3.0 * mass + sd).powi(3);
    if lambda <= lower {
        Ok(Classification::Degenerate(DegenerateReason::LambdaLow))
    } else if lambda >= upper {
        Ok(Classification::Degenerate(DegenerateReason::LambdaHigh))
    } else {
        Ok(Classification::Nondegenerate)
    }
}

/// Root-structure classification computed directly from the quartic: locate all
/// simple positive roots of r^2 mu and demand the ordering, simplicity and sign
/// pattern that the closed-form inequalities encode. Used as an independent
/// cross-check of [`classify_nondegenerate`].
pub fn classify_brute_force(lambda: f64, mass: f64, charge: f64) -> Result<Classification> {
    if !(lambda > 0.0) || !(mass > 0.0) {
        return Err(Error::Domain("need lambda > 0, mass > 0".into()));
    }
    let q2 = charge * charge;
    // r^2 mu = Q^2 - 2 m r + r^2 - (lambda/3) r^4, ascending coefficients.
    let coeffs = [q2, -2.0 * mass, 1.0, 0.0, -lambda / 3.0];
    let scale = (3.0 * mass).max(1.0 / lambda.sqrt());
    let mut pos: Vec<f64> = poly_roots(&coeffs)
        .into_iter()
        .filter(|z| z.im.abs() < 1e-7 * scale && z.re > 1e-10 * scale)
        .map(|z| polish_real_root(&coeffs, z.re, 40))
        .collect();
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pos.dedup_by(|a, b| (*a - *b).abs() < 1e-7 * scale);
    let needed = if charge == 0.0 { 2 } else { 3 };
    if pos.len() < needed {
        return Ok(Classification::Degenerate(DegenerateReason::NegativeDiscriminant));
    }
    let r_minus = pos[pos.len() - 2];
    let r_plus = pos[pos.len() - 1];
    let p = BlackHoleParams { lambda, mass, spin: [0.0; 3], charge_e: charge, charge_m: 0.0 };
    if !(mu_prime(&p, r_minus) > 0.0 && mu_prime(&p, r_plus) < 0.0) {
        return Ok(Classification::Degenerate(DegenerateReason::LambdaHigh));
    }
    // r^-2 mu must have a simple interior maximum between the top two roots.
    let f = |r: f64| -2.0 / (r * r * r) * mu_generic(&p, r) + mu_prime(&p, r) / (r * r);
    let (a, b) = (r_minus * 1.000001, r_plus * 0.999999);
    if !(f(a) > 0.0 && f(b) < 0.0) {
        return Ok(Classification::Degenerate(DegenerateReason::LambdaHigh));
    }
    Ok(Classification::Nondegenerate)
}

/// Horizon structure of a nondegenerate background.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HorizonData {
    /// Inner (Cauchy) horizon; 0 for an uncharged hole.
    pub r_inner: f64,
    /// Event horizon.
    pub r_minus: f64,
    /// Cosmological horizon.
    pub r_plus: f64,
    /// Smaller critical radius of r^-2 mu.
    pub r_crit_1: f64,
    /// Larger critical radius of r^-2 mu: the photon sphere.
    pub r_crit_2: f64,
    /// Maximizer of mu on (r_minus, r_plus).
    pub r_mu_max: f64,
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    pub nondegenerate: bool,
}

impl HorizonData {
    /// Photon-sphere radius (alias for the larger critical radius).
    pub fn r_photon(&self) -> f64 {
        self.r_crit_2
    }
}

/// Locate and polish the horizon radii.
pub fn horizons(p: &BlackHoleParams) -> Result<HorizonData> {
    let q = p.q_eff();
    match classify_nondegenerate(p.lambda, p.mass, q)? {
        Classification::Nondegenerate => {}
        c => return Err(Error::Degenerate(format!("{c}"))),
    }
    let q2 = p.q2();
    let coeffs = [q2, -2.0 * p.mass, 1.0, 0.0, -p.lambda / 3.0];
    let scale = (3.0 * p.mass).max(1.0 / p.lambda.sqrt());
    let mut pos: Vec<f64> = poly_roots(&coeffs)
        .into_iter()
        .filter(|z| z.im.abs() < 1e-6 * scale && z.re > 1e-9 * scale)
        .map(|z| polish_real_root(&coeffs, z.re, 60))
        .collect();
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let needed = if q2 == 0.0 { 2 } else { 3 };
    if pos.len() != needed {
        return Err(Error::Numerical(format!(
            "expected {needed} positive quartic roots, found {}: {pos:?}",
            pos.len()
        )));
    }
    let (r_inner, r_minus, r_plus) = if q2 == 0.0 {
        (0.0, pos[0], pos[1])
    } else {
        (pos[0], pos[1], pos[2])
    };
    // Polished roots must actually kill mu.
    for &r in &[r_minus, r_plus] {
        let (v, dv) = horner_with_derivative(&coeffs, r);
        if v.abs() > 1e-12 * (1.0 + dv.abs()) * scale * scale {
            return Err(Error::Numerical(format!("root polish stalled at r={r}, residual {v}")));
        }
    }
    let d = 9.0 * p.mass * p.mass - 8.0 * q2;
    let sd = d.sqrt();
    let r_crit_1 = (3.0 * p.mass - sd) / 2.0;
    let r_crit_2 = (3.0 * p.mass + sd) / 2.0;
    // Ordering demanded of a nondegenerate tuple.
    let ordered = if q2 == 0.0 {
        r_minus < r_crit_2 && r_crit_2 < r_plus
    } else {
        0.0 < r_inner
            && r_inner < r_crit_1
            && r_crit_1 < r_minus
            && r_minus < r_crit_2
            && r_crit_2 < r_plus
    };
    if !ordered {
        return Err(Error::Numerical(format!(
            "root ordering violated: r_i={r_inner} r1={r_crit_1} r-={r_minus} rP={r_crit_2} r+={r_plus}"
        )));
    }
    let r_mu_max = find_mu_max(p, r_minus, r_plus)?;
    let kappa_minus = mu_prime(p, r_minus).abs() / 2.0;
    let kappa_plus = mu_prime(p, r_plus).abs() / 2.0;
    if kappa_minus <= 0.0 || kappa_plus <= 0.0 {
        return Err(Error::Numerical("vanishing surface gravity after polish".into()));
    }
    Ok(HorizonData {
        r_inner,
        r_minus,
        r_plus,
        r_crit_1,
        r_crit_2,
        r_mu_max,
        kappa_minus,
        kappa_plus,
        nondegenerate: true,
    })
}

/// Unique zero of mu' in (r_minus, r_plus), by bisection plus Newton polish.
fn find_mu_max(p: &BlackHoleParams, r_minus: f64, r_plus: f64) -> Result<f64> {
    let mut a = r_minus * (1.0 + 1e-12);
    let mut b = r_plus * (1.0 - 1e-12);
    let mut fa = mu_prime(p, a);
    let fb = mu_prime(p, b);
    if !(fa > 0.0 && fb < 0.0) {
        return Err(Error::Numerical("mu' does not change sign between the horizons".into()));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = mu_prime(p, m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-15 * b {
            break;
        }
    }
    let mut r = 0.5 * (a + b);
    for _ in 0..8 {
        let step = mu_prime(p, r) / mu_pp(p, r);
        r -= step;
        if step.abs() < 1e-16 * r {
            break;
        }
    }
    Ok(r)
}

/// Data of the everywhere-timelike t* gauge on [r_minus, r_plus].
#[derive(Clone, Debug)]
pub struct StarGauge {
    /// Constant c^2; continuity of nu at the maximum of mu forces c^2 mu(r_c) = 1.
    pub c_squared: f64,
    pub r_c: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    params: BlackHoleParams,
    /// Taylor coefficients of sqrt((1 - c^2 mu)/(r - r_c)^2) about r_c,
    /// used for a cancellation-free nu near its zero.
    sqrt_g: Series<12>,
}

impl StarGauge {
    /// nu(r) = -sign(r - r_c) sqrt(1 - c^2 mu(r)); smooth through r_c.
    pub fn nu(&self, r: f64) -> f64 {
        let d = r - self.r_c;
        if d.abs() < self.near_width() {
            return -d * self.sqrt_g.eval(d);
        }
        let w = (1.0 - self.c_squared * mu_generic(&self.params, r)).max(0.0);
        -d.signum() * w.sqrt()
    }

    /// Analytic derivative nu'(r).
    pub fn nu_prime(&self, r: f64) -> f64 {
        let d = r - self.r_c;
        if d.abs() < self.near_width() {
            return -(self.sqrt_g.eval(d) + d * self.sqrt_g.derivative().eval(d));
        }
        -self.c_squared * mu_prime(&self.params, r) / (2.0 * self.nu(r))
    }

    /// T'(r) from nu = -mu T'.
    pub fn t_prime(&self, r: f64) -> f64 {
        -self.nu(r) / mu_generic(&self.params, r)
    }

    /// Divergence of the t* coordinate vector field: r^-2 (r^2 nu)'.
    pub fn box_tstar(&self, r: f64) -> Result<f64> {
        if r < self.r_minus - 1e-12 || r > self.r_plus + 1e-12 {
            return Err(Error::Domain(format!(
                "box_tstar needs r in [{}, {}], got {r}",
                self.r_minus, self.r_plus
            )));
        }
        Ok(self.nu_prime(r) + 2.0 * self.nu(r) / r)
    }

    fn near_width(&self) -> f64 {
        1e-3 * (self.r_plus - self.r_minus)
    }
}

/// Build the t* gauge for nondegenerate parameters.
pub fn star_gauge(p: &BlackHoleParams) -> Result<StarGauge> {
    let h = horizons(p)?;
    let r_c = h.r_mu_max;
    let mu_c = mu_generic(p, r_c);
    if mu_c <= 0.0 {
        return Err(Error::Numerical("mu not positive at its interior maximum".into()));
    }
    let c_squared = 1.0 / mu_c;
    // w(r) = 1 - c^2 mu has a double zero at r_c; divide it out in series form.
    let mu_ser: Series<14> = mu_generic(p, Series::var(r_c));
    let mut w = [0.0f64; 14];
    for k in 0..14 {
        w[k] = -c_squared * mu_ser.c[k];
    }
    w[0] += 1.0;
    let mut g = Series::<12> { c: [0.0; 12] };
    g.c.copy_from_slice(&w[2..14]);
    if g.c[0] <= 0.0 {
        return Err(Error::Numerical("degenerate maximum of mu in the t* gauge".into()));
    }
    Ok(StarGauge {
        c_squared,
        r_c,
        r_minus: h.r_minus,
        r_plus: h.r_plus,
        params: *p,
        sqrt_g: g.sqrt(),
    })
}

/// r^-2 (r^2 nu)' at a single radius (convenience wrapper building the gauge).
pub fn box_tstar(p: &BlackHoleParams, r: f64) -> Result<f64> {
    star_gauge(p)?.box_tstar(r)
}

/// Quadrature of box_tstar * r^2 over [r_minus, r_plus]; equals
/// r^2 nu evaluated between the endpoints, i.e. -(r_plus^2 + r_minus^2).
pub fn box_tstar_integral(p: &BlackHoleParams) -> Result<f64> {
    let g = star_gauge(p)?;
    let f = |r: f64| (g.nu_prime(r) + 2.0 * g.nu(r) / r) * r * r;
    Ok(quad::adaptive_simpson(&f, g.r_minus, g.r_plus, 1e-11, 1e-13))
}

/// The 2x2 linearization of the null-geodesic flow transverse to the photon
/// sphere, in the (radial position, radial momentum) normal form.
pub fn trapped_matrix(p: &BlackHoleParams) -> Result<[[f64; 2]; 2]> {
    let h = horizons(p)?;
    let r = h.r_crit_2;
    let m = mu_generic(p, r);
    // (r^-2 mu)'' expanded in mu and its derivatives.
    let u2 = 6.0 * m / r.powi(4) - 4.0 * mu_prime(p, r) / r.powi(3) + mu_pp(p, r) / (r * r);
    Ok([[0.0, r * r * u2 / (m * m)], [-2.0 * m, 0.0]])
}

/// Positive expansion rate of the trapping at the photon sphere:
/// sqrt(2 (-(r^-2 mu)'') r^2 / mu) at r = r_P.
pub fn trapped_expansion_rate(p: &BlackHoleParams) -> Result<f64> {
    let h = horizons(p)?;
    let r = h.r_crit_2;
    let m = mu_generic(p, r);
    let u2 = 6.0 * m / r.powi(4) - 4.0 * mu_prime(p, r) / r.powi(3) + mu_pp(p, r) / (r * r);
    if u2 >= 0.0 {
        return Err(Error::Numerical(format!(
            "second derivative of r^-2 mu at the photon sphere is {u2} >= 0"
        )));
    }
    Ok((2.0 * (-u2) * r * r / m).sqrt())
}

/// Horizons of the slowly rotating hole: zeros of
/// (r^2 + a^2)(1 - lambda r^2/3) - 2 m r + (1 + lambda a^2/3)^2 Q^2,
/// continued from the non-rotating roots by Newton with bisection fallback.
pub fn knds_horizons(p: &BlackHoleParams) -> Result<(f64, f64)> {
    let h = horizons(p)?;
    let a = p.spin_mag();
    if a == 0.0 {
        return Ok((h.r_minus, h.r_plus));
    }
    let lb = p.lambda * a * a / 3.0;
    let q2 = p.q2();
    let f = |r: f64| {
        (r * r + a * a) * (1.0 - p.lambda * r * r / 3.0) - 2.0 * p.mass * r
            + (1.0 + lb) * (1.0 + lb) * q2
    };
    let df = |r: f64| {
        2.0 * r * (1.0 - p.lambda * r * r / 3.0) + (r * r + a * a) * (-2.0 * p.lambda * r / 3.0)
            - 2.0 * p.mass
    };
    let solve_from = |r0: f64| -> Result<f64> {
        let mut r = r0;
        for _ in 0..100 {
            let step = f(r) / df(r);
            r -= step;
            if !r.is_finite() || r <= 0.0 || r > 10.0 * h.r_plus {
                break;
            }
            if step.abs() < 1e-15 * r {
                if f(r).abs() < 1e-10 * (1.0 + df(r).abs()) {
                    return Ok(r);
                }
                break;
            }
        }
        // Bisection fallback on an expanding bracket around the seed.
        let mut half = 0.02 * r0;
        for _ in 0..12 {
            let (lo, hi) = (r0 - half, r0 + half);
            if lo > 0.0 && f(lo) * f(hi) < 0.0 {
                let (mut lo, mut hi) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (lo + hi);
                    if f(lo) * f(m) <= 0.0 {
                        hi = m;
                    } else {
                        lo = m;
                    }
                }
                return Ok(0.5 * (lo + hi));
            }
            half *= 2.0;
        }
        Err(Error::SpinTooLarge(format!(
            "continuation from r={r0} at spin {a} did not converge"
        )))
    };
    let rm = solve_from(h.r_minus)?;
    let rp = solve_from(h.r_plus)?;
    if !(rm < rp) {
        return Err(Error::SpinTooLarge("continued roots lost their ordering".into()));
    }
    Ok((rm, rp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lambda: f64, q: f64) -> BlackHoleParams {
        BlackHoleParams::static_params(lambda, 1.0, q, 0.0).unwrap()
    }

    #[test]
    fn mu_arithmetic() {
        // direct arithmetic: 1 - 2 + 1 - 0.1/3
        let v = mu(&p(0.1, 1.0), 1.0).unwrap();
        assert!((v - (-1.0 / 30.0)).abs() < 1e-15);
        assert!(mu(&p(0.1, 1.0), -1.0).is_err());
        assert!(mu(&p(0.1, 1.0), 0.0).is_err());
    }

    #[test]
    fn schwarzschild_limit() {
        let v = mu(&p(1e-9, 0.0), 2.0).unwrap();
        assert!((v + 4.0 * 1e-9 / 3.0).abs() < 1e-18);
    }

    #[test]
    fn classification_examples() {
        assert!(classify_nondegenerate(0.05, 1.0, 0.0).unwrap().is_nondegenerate());
        assert!(!classify_nondegenerate(1.0 / 9.0, 1.0, 0.0).unwrap().is_nondegenerate());
        assert!(classify_nondegenerate(0.15, 1.0, 1.0).unwrap().is_nondegenerate());
        assert_eq!(
            classify_nondegenerate(0.01, 1.0, 1.2).unwrap(),
            Classification::Degenerate(DegenerateReason::NegativeDiscriminant)
        );
        assert!(classify_nondegenerate(-0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn horizon_examples() {
        let h = horizons(&p(0.15, 1.0)).unwrap();
        assert!((h.r_crit_1 - 1.0).abs() < 1e-14);
        assert!((h.r_crit_2 - 2.0).abs() < 1e-14);
        for &r in &[h.r_minus, h.r_plus] {
            let params = p(0.15, 1.0);
            let v = mu(&params, r).unwrap();
            assert!(v.abs() < 1e-12 * (1.0 + mu_prime(&params, r).abs()));
        }
        assert!(h.kappa_minus > 0.0 && h.kappa_plus > 0.0);
        assert!(horizons(&p(1.0 / 9.0, 0.0)).is_err());
    }

    #[test]
    fn star_gauge_identities() {
        let params = p(0.15, 1.0);
        let g = star_gauge(&params).unwrap();
        assert!(g.nu(g.r_c).abs() < 1e-14);
        assert!((g.nu(g.r_plus) + 1.0).abs() < 1e-10);
        assert!((g.nu(g.r_minus) - 1.0).abs() < 1e-10);
        let mut signs = 0;
        let mut last = g.nu(g.r_minus);
        for i in 1..=100 {
            let r = g.r_minus + (g.r_plus - g.r_minus) * i as f64 / 101.0;
            let v = g.nu(r);
            if v * last < 0.0 {
                signs += 1;
            }
            last = v;
            let resid = g.c_squared * mu(&params, r).unwrap() + v * v - 1.0;
            assert!(resid.abs() < 1e-12, "c^2 mu + nu^2 = 1 failed at r={r}: {resid}");
            // T' consistency: c^2 = 1/mu - mu T'^2 away from the horizons.
            let tp = g.t_prime(r);
            let m = mu(&params, r).unwrap();
            assert!((1.0 / m - m * tp * tp - g.c_squared).abs() < 1e-9 * g.c_squared);
        }
        assert_eq!(signs, 1);
    }

    #[test]
    fn nu_prime_smooth_through_rc() {
        let g = star_gauge(&p(0.15, 1.0)).unwrap();
        // compare series and direct branches just outside the switchover
        let w = 1e-3 * (g.r_plus - g.r_minus);
        for &d in &[-1.01 * w, -0.99 * w, 0.99 * w, 1.01 * w] {
            let r = g.r_c + d;
            let fd = (g.nu(r + 1e-6) - g.nu(r - 1e-6)) / 2e-6;
            assert!((g.nu_prime(r) - fd).abs() < 1e-7, "nu' mismatch at offset {d}");
        }
    }

    #[test]
    fn box_tstar_closed_form() {
        let params = p(0.15, 1.0);
        let h = horizons(&params).unwrap();
        let g = star_gauge(&params).unwrap();
        let v = g.box_tstar(g.r_c).unwrap();
        assert!((v - g.nu_prime(g.r_c)).abs() < 1e-13);
        let integral = box_tstar_integral(&params).unwrap();
        let exact = -(h.r_plus * h.r_plus + h.r_minus * h.r_minus);
        assert!(
            (integral - exact).abs() < 1e-8 * exact.abs(),
            "integral {integral} vs {exact}"
        );
        assert!(g.box_tstar(h.r_plus + 1.0).is_err());
    }

    #[test]
    fn trapped_rate_matches_eigensolver() {
        let params = p(0.15, 1.0);
        let m = trapped_matrix(&params).unwrap();
        assert!(m[0][1] < 0.0 && m[1][0] < 0.0);
        let lam = trapped_expansion_rate(&params).unwrap();
        // eigenvalues of [[0, b], [c, 0]] are +-sqrt(bc)
        let eig = (m[0][1] * m[1][0]).sqrt();
        assert!((lam - eig).abs() < 1e-12 * (1.0 + eig));
    }

    #[test]
    fn rotating_horizons_continuation() {
        let base = p(0.05, 0.3);
        let h = horizons(&base).unwrap();
        let spun = BlackHoleParams::new(0.05, 1.0, [0.0, 0.0, 0.01], 0.3, 0.0).unwrap();
        let (rm, rp) = knds_horizons(&spun).unwrap();
        assert!((rm - h.r_minus).abs() < 1e-3);
        assert!((rp - h.r_plus).abs() < 1e-3);
        let a = 0.01;
        let lb = 0.05 * a * a / 3.0;
        for &r in &[rm, rp] {
            let v = (r * r + a * a) * (1.0 - 0.05 * r * r / 3.0) - 2.0 * r
                + (1.0 + lb) * (1.0 + lb) * 0.09;
            assert!(v.abs() < 1e-10);
        }
        let (rm0, rp0) = knds_horizons(&base).unwrap();
        assert_eq!((rm0, rp0), (h.r_minus, h.r_plus));
    }
}
