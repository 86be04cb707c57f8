//! Resonance (quasinormal-mode) counting for the decoupled radial equations.
//!
//! The boundary-regular solution at each horizon is built by a Frobenius
//! expansion and continued to an interior matching radius by adaptive
//! Runge-Kutta integration; a mode exists at a complex frequency `sigma`
//! exactly when the connection Wronskian of the two horizon-regular branches
//! vanishes. Mode counts inside a rectangular frequency window come from the
//! argument principle applied to the (analytic) Wronskian on the window
//! boundary, with individual zeros refined by bisection-in-winding plus a
//! Newton polish.

use crate::error::{Error, Result};
use crate::numeric::{rk, Series};
use crate::perturbation::{Branch, MasterEquation, ModeSector, ScalarSector, SectorKind, Sign};
use crate::spacetime::{self, mu_generic, mu_prime, BlackHoleParams};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};

type C = Complex64;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

/// Internal truncation head-room for the local Taylor data.
const NN: usize = 44;

/// Largest accepted Frobenius truncation order.
pub const MAX_FROBENIUS_ORDER: usize = 40;

/// Which horizon a local expansion is anchored at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HorizonSide {
    /// Event horizon r_minus (series runs inward, toward larger r).
    Event,
    /// Cosmological horizon r_plus (series runs inward, toward smaller r).
    Cosmological,
}

/// One radial connection problem: a decoupled channel, a complex frequency,
/// a series truncation order, and the interior matching radius.
#[derive(Clone, Copy, Debug)]
pub struct RadialProblem {
    pub equation: MasterEquation,
    pub sigma: C,
    pub frobenius_order: usize,
    pub match_radius: f64,
}

impl RadialProblem {
    /// Build a problem; `match_radius = None` picks the maximizer of mu.
    /// An explicit matching radius must stay at least 5% of the horizon gap
    /// away from either horizon.
    pub fn new(
        equation: MasterEquation,
        sigma: C,
        frobenius_order: usize,
        match_radius: Option<f64>,
    ) -> Result<Self> {
        if frobenius_order < 4 {
            return Err(Error::Usage(format!(
                "frobenius_order must be at least 4, got {frobenius_order}"
            )));
        }
        if frobenius_order > MAX_FROBENIUS_ORDER {
            return Err(Error::Usage(format!(
                "frobenius_order must be at most {MAX_FROBENIUS_ORDER}, got {frobenius_order}"
            )));
        }
        if !sigma.is_finite() {
            return Err(Error::Domain(format!("sigma must be finite, got {sigma}")));
        }
        let h = equation.horizons;
        let lo = h.r_minus + 0.05 * (h.r_plus - h.r_minus);
        let hi = h.r_plus - 0.05 * (h.r_plus - h.r_minus);
        let match_radius = match match_radius {
            None => h.r_mu_max.clamp(lo, hi),
            Some(r) => {
                if !(r >= lo && r <= hi) {
                    return Err(Error::Domain(format!(
                        "match_radius {r} must lie in [{lo}, {hi}] (5% inside the horizon gap)"
                    )));
                }
                r
            }
        };
        Ok(RadialProblem { equation, sigma, frobenius_order, match_radius })
    }
}

// ---------------------------------------------------------------------------
// Local (Frobenius) solutions at the horizons
// ---------------------------------------------------------------------------

/// Local data of a regular singular point in the inward variable `s`:
/// the equation reads `s^2 A(s) psi'' + s B(s) psi' + C(s) psi = 0` with
/// `A(0) != 0`, and the requested branch is `psi = s^rho (1 + u_1 s + ...)`.
struct LocalOde {
    r_h: f64,
    /// dr/ds: +1 at the event horizon, -1 at the cosmological horizon.
    eps: f64,
    a: [C; NN],
    b: [C; NN],
    cc: [C; NN],
    rho: C,
}

/// A computed horizon-regular branch, evaluable at any offset inside its
/// convergence control radius.
struct LocalSolution {
    r_h: f64,
    eps: f64,
    rho: C,
    u: Vec<C>,
    /// Auto-selected evaluation offset meeting the truncation target.
    delta: f64,
}

impl LocalSolution {
    /// Value and d/dr of the branch at inward offset `s > 0`.
    fn eval(&self, s: f64) -> (C, C) {
        let pref = (self.rho * s.ln()).exp();
        let mut p = C::new(0.0, 0.0);
        let mut dp = C::new(0.0, 0.0);
        for k in (0..self.u.len()).rev() {
            dp = dp * s + p;
            p = p * s + self.u[k];
        }
        let psi = pref * p;
        let dpsi_ds = pref * (self.rho / c(s) * p + dp);
        (psi, c(self.eps) * dpsi_ds)
    }

    fn start_radius(&self) -> f64 {
        self.r_h + self.eps * self.delta
    }
}

/// Shift a real series up by one power of the local variable.
fn shift_up(x: &Series<NN>) -> Series<NN> {
    let mut out = Series::<NN> { c: [0.0; NN] };
    for k in 1..NN {
        out.c[k] = x.c[k - 1];
    }
    out
}

/// Local data of the normal-form equation mu (mu psi')' - (V - sigma^2) psi = 0
/// about one horizon: with mu = s m(s), the Fuchsian blocks are A = m^2,
/// B = m^2 + s m m', C = sigma^2 - V.
fn normal_form_local(eq: &MasterEquation, sigma: C, side: HorizonSide) -> Result<LocalOde> {
    let h = eq.horizons;
    let (r_h, eps) = match side {
        HorizonSide::Event => (h.r_minus, 1.0),
        HorizonSide::Cosmological => (h.r_plus, -1.0),
    };
    let r_s: Series<NN> =
        if eps > 0.0 { Series::var(r_h) } else { Series::var_reflected(r_h) };
    let mut mu_s = mu_generic(&eq.params, r_s);
    // The constant term is a horizon root by definition; drop the O(1e-14)
    // residue of the polished root so the indicial data is exact.
    mu_s.c[0] = 0.0;
    let mut mhat = Series::<NN> { c: [0.0; NN] };
    for k in 1..NN {
        mhat.c[k - 1] = mu_s.c[k];
    }
    if !(mhat.c[0] > 0.0) {
        return Err(Error::Numerical(format!(
            "mu does not increase inward at r = {r_h}: leading slope {}",
            mhat.c[0]
        )));
    }
    let a_re = mhat * mhat;
    let b_re = a_re + shift_up(&(mhat * mhat.derivative()));
    let mut v_s = eq.schrodinger_potential_generic(r_s)?;
    // The normal-form potential carries the horizon factor mu; kill the
    // numerically tiny constant term for the same reason as above.
    v_s.c[0] = 0.0;
    let mut a = [C::new(0.0, 0.0); NN];
    let mut b = a;
    let mut cc = a;
    for k in 0..NN {
        a[k] = c(a_re.c[k]);
        b[k] = c(b_re.c[k]);
        cc[k] = -c(v_s.c[k]);
    }
    cc[0] += sigma * sigma;
    // Exponents are +- i sigma / mu_1 with mu_1 = 2 kappa; the horizon-regular
    // (outgoing-through-the-horizon) branch is the lower sign.
    let rho = -C::i() * sigma / mhat.c[0];
    Ok(LocalOde { r_h, eps, a, b, cc, rho })
}

/// Local data of the damped spherical operator
/// `r^2 mu psi'' + [(r^2 mu)' + (g - 2 i sigma) nu r^2] psi'
///  + [sigma (sigma + i g) c^2 r^2 + (g - i sigma) (r^2 nu)'] psi = 0`
/// about one horizon, smooth branch (exponent 0).
fn damped_local(
    p: &BlackHoleParams,
    sigma: C,
    gamma: f64,
    side: HorizonSide,
) -> Result<LocalOde> {
    let gauge = spacetime::star_gauge(p)?;
    let h = spacetime::horizons(p)?;
    let (r_h, eps, nu_sign) = match side {
        HorizonSide::Event => (h.r_minus, 1.0, 1.0),
        HorizonSide::Cosmological => (h.r_plus, -1.0, -1.0),
    };
    let r_s: Series<NN> =
        if eps > 0.0 { Series::var(r_h) } else { Series::var_reflected(r_h) };
    let mut mu_s = mu_generic(p, r_s);
    mu_s.c[0] = 0.0;
    let r2 = r_s * r_s;
    let p1 = r2 * mu_s; // r^2 mu; vanishes at s = 0
    let e = Series::<NN>::constant(eps);
    let p2 = p1.derivative() * e; // d(r^2 mu)/dr
    let w = Series::<NN>::constant(1.0) - Series::<NN>::constant(gauge.c_squared) * mu_s;
    let nu_s = w.sqrt() * Series::<NN>::constant(nu_sign);
    let p3 = nu_s * r2; // nu r^2
    let p4 = p3.derivative() * e; // (r^2 nu)/dr derivative
    let p5 = r2 * Series::<NN>::constant(gauge.c_squared); // c^2 r^2
    let gm2is = c(gamma) - C::i() * sigma * 2.0;
    let gmis = c(gamma) - C::i() * sigma;
    let s_quad = sigma * (sigma + C::i() * gamma);
    let mut a = [C::new(0.0, 0.0); NN];
    let mut b = a;
    let mut cc = a;
    for k in 0..NN {
        // A-tilde = (r^2 mu)/s ; B-hat = eps * (full first-order coefficient);
        // C-hat = s * (zeroth-order coefficient).
        a[k] = c(if k + 1 < NN { p1.c[k + 1] } else { 0.0 });
        b[k] = c(eps) * (c(p2.c[k]) + gm2is * c(p3.c[k]));
        if k >= 1 {
            cc[k] = s_quad * c(p5.c[k - 1]) + gmis * c(p4.c[k - 1]);
        }
    }
    Ok(LocalOde { r_h, eps, a, b, cc, rho: C::new(0.0, 0.0) })
}

/// Run the Frobenius recursion for the requested branch.
fn fuchsian_coefficients(ode: &LocalOde, order: usize) -> Result<Vec<C>> {
    let a0 = ode.a[0];
    let indicial = |lam: C| a0 * lam * (lam - 1.0) + ode.b[0] * lam + ode.cc[0];
    let mut u = vec![C::new(0.0, 0.0); order + 1];
    u[0] = c(1.0);
    for n in 1..=order {
        let mut acc = C::new(0.0, 0.0);
        for k in 1..=n.min(NN - 1) {
            let lam = ode.rho + c((n - k) as f64);
            let coef = ode.a[k] * lam * (lam - 1.0) + ode.b[k] * lam + ode.cc[k];
            acc += coef * u[n - k];
        }
        let den = indicial(ode.rho + c(n as f64));
        if den.norm() < 1e-9 * a0.norm() * n as f64 {
            return Err(Error::IndicialDegeneracy(format!(
                "recursion denominator vanishes at order {n} (exponent {}, {})",
                ode.rho, ode.r_h
            )));
        }
        u[n] = -acc / den;
    }
    Ok(u)
}

/// Pick the largest evaluation offset (starting from 10% of the horizon gap)
/// whose truncation tail is below 1e-10 of the partial sum.
fn pick_offset(u: &[C], span: f64) -> Result<f64> {
    let n = u.len() - 1;
    let mut delta = 0.1 * span;
    loop {
        let mut tot = 0.0;
        let mut pow = 1.0;
        let mut last3 = [0.0; 3];
        for (k, uk) in u.iter().enumerate() {
            let t = uk.norm() * pow;
            tot += t;
            if k + 3 > n {
                last3[k + 3 - n - 1] = t;
            }
            pow *= delta;
        }
        if last3.iter().sum::<f64>() <= 1e-10 * tot.max(1.0) {
            return Ok(delta);
        }
        delta *= 0.5;
        if delta < 1e-4 * span {
            return Err(Error::Numerical(format!(
                "Frobenius tail does not reach the 1e-10 truncation target at order {n} \
                 even at offset {delta:.3e}"
            )));
        }
    }
}

fn local_solution(problem: &RadialProblem, side: HorizonSide) -> Result<LocalSolution> {
    let eq = &problem.equation;
    let ode = match eq.branch {
        Branch::ConstraintDamping(g) => damped_local(&eq.params, problem.sigma, g, side)?,
        _ => normal_form_local(eq, problem.sigma, side)?,
    };
    let u = fuchsian_coefficients(&ode, problem.frobenius_order)?;
    let span = eq.horizons.r_plus - eq.horizons.r_minus;
    let delta = pick_offset(&u, span)?;
    Ok(LocalSolution { r_h: ode.r_h, eps: ode.eps, rho: ode.rho, u, delta })
}

/// Horizon-regular branch evaluated just inside one horizon.
#[derive(Clone, Copy, Debug)]
pub struct FrobeniusSolution {
    /// Radius the series was evaluated at.
    pub r_start: f64,
    /// Inward offset |r_start - r_horizon| (auto-selected).
    pub offset: f64,
    pub psi: C,
    /// d psi / dr at r_start.
    pub dpsi: C,
}

/// Build the horizon-regular Frobenius branch on one side and evaluate it at
/// an automatically chosen offset meeting a 1e-10 truncation target.
pub fn frobenius_solution(problem: &RadialProblem, side: HorizonSide) -> Result<FrobeniusSolution> {
    let sol = local_solution(problem, side)?;
    let (psi, dpsi) = sol.eval(sol.delta);
    Ok(FrobeniusSolution { r_start: sol.start_radius(), offset: sol.delta, psi, dpsi })
}

// ---------------------------------------------------------------------------
// Connection Wronskian
// ---------------------------------------------------------------------------

/// Normal-form potential as a plain closure; the scalar sectors get their
/// shared coefficient data built once instead of per evaluation.
fn potential_fn(eq: &MasterEquation) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    match (eq.sector.kind(), eq.branch) {
        (SectorKind::ScalarHigh | SectorKind::ScalarDipole, Branch::Plus) => {
            let sec = ScalarSector::new(&eq.params, eq.sector.l())?;
            Ok(Box::new(move |r| sec.v_pm(Sign::Plus, r)))
        }
        (SectorKind::ScalarHigh | SectorKind::ScalarDipole, Branch::Minus) => {
            let sec = ScalarSector::new(&eq.params, eq.sector.l())?;
            Ok(Box::new(move |r| sec.v_pm(Sign::Minus, r)))
        }
        (SectorKind::ScalarHigh | SectorKind::ScalarDipole, Branch::MaxwellAux) => {
            let sec = ScalarSector::new(&eq.params, eq.sector.l())?;
            Ok(Box::new(move |r| sec.v_a(r)))
        }
        _ => {
            let e = *eq;
            // Probe once so an incompatible pair errors here, not inside the
            // integrator.
            let mid = 0.5 * (e.horizons.r_minus + e.horizons.r_plus);
            e.schrodinger_potential(mid)?;
            Ok(Box::new(move |r| {
                e.schrodinger_potential(r).expect("interior radius")
            }))
        }
    }
}

/// Connection Wronskian of the two horizon-regular branches, evaluated by
/// continuing both to the matching radius. For the normal-form channels this
/// is `mu (psi_e psi_c' - psi_e' psi_c)`, which is independent of the matching
/// radius; it vanishes exactly at the resonances.
pub fn wronskian(problem: &RadialProblem) -> Result<C> {
    let fe = frobenius_solution(problem, HorizonSide::Event)?;
    let fc = frobenius_solution(problem, HorizonSide::Cosmological)?;
    let rm = problem.match_radius;
    let eq = &problem.equation;
    let sigma = problem.sigma;
    let p = eq.params;
    match eq.branch {
        Branch::ConstraintDamping(gamma) => {
            let gauge = spacetime::star_gauge(&p)?;
            let rhs = move |r: f64, y: &[C; 2]| {
                let mu = mu_generic(&p, r);
                let a = r * r * mu;
                let rmu_p = r * r * mu_prime(&p, r) + 2.0 * r * mu;
                let nu = gauge.nu(r);
                let r2nu_p = 2.0 * r * nu + r * r * gauge.nu_prime(r);
                let c2r2 = gauge.c_squared * r * r;
                let b = c(rmu_p) + (c(gamma) - C::i() * sigma * 2.0) * c(nu * r * r);
                let cc = sigma * (sigma + C::i() * gamma) * c(c2r2)
                    + (c(gamma) - C::i() * sigma) * c(r2nu_p);
                [y[1], -(b * y[1] + cc * y[0]) / c(a)]
            };
            let ye = integrate_to(&rhs, fe.r_start, rm, [fe.psi, fe.dpsi])?;
            let yc = integrate_to(&rhs, fc.r_start, rm, [fc.psi, fc.dpsi])?;
            Ok(ye[0] * yc[1] - ye[1] * yc[0])
        }
        _ => {
            let pot = potential_fn(eq)?;
            let sig2 = sigma * sigma;
            let rhs = move |r: f64, y: &[C; 2]| {
                let mu = mu_generic(&p, r);
                [y[1] / c(mu), (c(pot(r)) - sig2) * y[0] / c(mu)]
            };
            let w0e = c(mu_generic(&p, fe.r_start)) * fe.dpsi;
            let w0c = c(mu_generic(&p, fc.r_start)) * fc.dpsi;
            let ye = integrate_to(&rhs, fe.r_start, rm, [fe.psi, w0e])?;
            let yc = integrate_to(&rhs, fc.r_start, rm, [fc.psi, w0c])?;
            Ok(ye[0] * yc[1] - ye[1] * yc[0])
        }
    }
}

fn integrate_to<R: rk::Rhs<2>>(rhs: &R, from: f64, to: f64, y0: [C; 2]) -> Result<[C; 2]> {
    let scale = y0[0].norm() + y0[1].norm();
    rk::integrate(rhs, from, to, y0, 1e-12, 1e-14 * (1.0 + scale)).ok_or_else(|| {
        Error::Numerical(format!("radial integration stalled between r = {from} and r = {to}"))
    })
}

// ---------------------------------------------------------------------------
// Mode counting by the argument principle
// ---------------------------------------------------------------------------

/// Rectangular frequency window [re_lo, re_hi] x [im_lo, im_hi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
}

impl Window {
    pub fn new(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Result<Self> {
        let w = Window { re_lo, re_hi, im_lo, im_hi };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.re_lo.is_finite()
            && self.im_lo.is_finite()
            && self.re_hi > self.re_lo
            && self.im_hi > self.im_lo;
        if !ok {
            return Err(Error::Domain(format!("bad frequency window {self:?}")));
        }
        Ok(())
    }

    pub fn center(&self) -> C {
        C::new(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))
    }

    pub fn diag(&self) -> f64 {
        ((self.re_hi - self.re_lo).powi(2) + (self.im_hi - self.im_lo).powi(2)).sqrt()
    }

    pub fn contains(&self, z: C) -> bool {
        z.re > self.re_lo && z.re < self.re_hi && z.im > self.im_lo && z.im < self.im_hi
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.re_lo, self.re_hi, self.im_lo, self.im_hi]
    }

    /// Counterclockwise boundary samples, `per_edge` per side.
    fn boundary(&self, per_edge: usize) -> Vec<C> {
        let mut pts = Vec::with_capacity(4 * per_edge);
        for i in 0..per_edge {
            let t = i as f64 / per_edge as f64;
            pts.push(C::new(self.re_lo + t * (self.re_hi - self.re_lo), self.im_lo));
        }
        for i in 0..per_edge {
            let t = i as f64 / per_edge as f64;
            pts.push(C::new(self.re_hi, self.im_lo + t * (self.im_hi - self.im_lo)));
        }
        for i in 0..per_edge {
            let t = i as f64 / per_edge as f64;
            pts.push(C::new(self.re_hi - t * (self.re_hi - self.re_lo), self.im_hi));
        }
        for i in 0..per_edge {
            let t = i as f64 / per_edge as f64;
            pts.push(C::new(self.re_lo, self.im_hi - t * (self.im_hi - self.im_lo)));
        }
        pts
    }

    /// Split at interior fractions (fx, fy); slightly off-center fractions keep
    /// zeros off the cuts.
    fn quadrants(&self, fx: f64, fy: f64) -> [Window; 4] {
        let rm = self.re_lo + fx * (self.re_hi - self.re_lo);
        let im = self.im_lo + fy * (self.im_hi - self.im_lo);
        [
            Window { re_lo: self.re_lo, re_hi: rm, im_lo: self.im_lo, im_hi: im },
            Window { re_lo: rm, re_hi: self.re_hi, im_lo: self.im_lo, im_hi: im },
            Window { re_lo: self.re_lo, re_hi: rm, im_lo: im, im_hi: self.im_hi },
            Window { re_lo: rm, re_hi: self.re_hi, im_lo: im, im_hi: self.im_hi },
        ]
    }
}

/// One refined Wronskian zero with the residual |W| at the refined point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ZeroRecord {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

/// Result of one windowed mode count.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub params: BlackHoleParams,
    pub sector: SectorKind,
    pub l: u32,
    pub branch: Branch,
    /// [re_lo, re_hi, im_lo, im_hi].
    pub window: [f64; 4],
    pub winding: i64,
    pub zeros: Vec<ZeroRecord>,
    pub samples_on_contour: usize,
}

impl ResonanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Wronskian-as-a-function-of-sigma, with the fixed solver settings used by
/// the counting machinery.
struct WronskianMap {
    equation: MasterEquation,
    order: usize,
    /// Contour points inside this radius around sigma = 0 are nudged out: the
    /// trivial stationary kernel sits there and would stall the phase tracking.
    exclusion: f64,
}

impl WronskianMap {
    fn eval(&self, sigma: C) -> Result<C> {
        let problem = RadialProblem::new(self.equation, sigma, self.order, None)?;
        wronskian(&problem)
    }

    fn eval_on_contour(&self, sigma: C) -> Result<C> {
        let n = sigma.norm();
        if n >= self.exclusion {
            return self.eval(sigma);
        }
        let nudged =
            if n == 0.0 { c(self.exclusion) } else { sigma * (self.exclusion / n) };
        self.eval(nudged)
    }
}

/// Winding number of `f` around the window boundary, doubling the sampling
/// until every phase increment is below pi/2. Returns (winding, samples used).
fn contour_winding<F>(f: &F, win: Window, start_per_edge: usize) -> Result<(i64, usize)>
where
    F: Fn(C) -> Result<C> + Sync,
{
    let mut per_edge = start_per_edge.max(16);
    loop {
        let pts = win.boundary(per_edge);
        let vals: Vec<C> = pts.par_iter().map(|&z| f(z)).collect::<Result<Vec<C>>>()?;
        let mut total = 0.0;
        let mut resolved = true;
        for i in 0..vals.len() {
            let a = vals[i];
            let b = vals[(i + 1) % vals.len()];
            if !a.is_finite() || a.norm() == 0.0 {
                resolved = false;
                break;
            }
            let step = (b / a).arg();
            if !(step.abs() < FRAC_PI_2) {
                resolved = false;
                break;
            }
            total += step;
        }
        if resolved {
            let turns = total / TAU;
            if (turns - turns.round()).abs() < 0.25 {
                return Ok((turns.round() as i64, 4 * per_edge));
            }
        }
        if per_edge >= 8192 {
            return Err(Error::ContourResolution(format!(
                "phase steps still exceed pi/2 with {} samples on [{}, {}] x [{}, {}]",
                4 * per_edge,
                win.re_lo,
                win.re_hi,
                win.im_lo,
                win.im_hi
            )));
        }
        per_edge *= 2;
    }
}

/// Newton polish (finite-difference derivative) of a zero from `start`.
fn polish_zero(map: &WronskianMap, start: C, scale: f64) -> Result<(C, f64)> {
    let mut z = start;
    let h = 1e-6 * scale;
    for _ in 0..50 {
        let w = map.eval(z)?;
        let wp = map.eval(z + c(h))?;
        let wm = map.eval(z - c(h))?;
        let d = (wp - wm) / c(2.0 * h);
        if d.norm() == 0.0 {
            break;
        }
        let step = w / d;
        z -= step;
        if step.norm() < 1e-12 * scale {
            break;
        }
    }
    let residual = map.eval(z)?.norm();
    Ok((z, residual))
}

fn locate_zeros(
    map: &WronskianMap,
    win: Window,
    scale: f64,
    depth: u32,
    out: &mut Vec<ZeroRecord>,
) -> Result<()> {
    let f = |z| map.eval_on_contour(z);
    let (w, _) = contour_winding(&f, win, 32)?;
    if w <= 0 {
        return Ok(());
    }
    let diag = win.diag();
    if (w == 1 && diag < 0.05 * scale) || diag < 1e-5 * scale || depth >= 40 {
        let (z, residual) = polish_zero(map, win.center(), scale)?;
        for _ in 0..w {
            out.push(ZeroRecord { re: z.re, im: z.im, residual });
        }
        return Ok(());
    }
    for q in win.quadrants(0.537, 0.471) {
        locate_zeros(map, q, scale, depth + 1, out)?;
    }
    Ok(())
}

/// Count the modes of one channel inside a frequency window by the argument
/// principle, refining each zero found. `contour_points` is the minimum total
/// boundary sampling (at least 64); sampling is doubled adaptively until every
/// phase increment is below pi/2.
pub fn count_resonances(
    equation: &MasterEquation,
    window: Window,
    contour_points: usize,
) -> Result<ResonanceReport> {
    if contour_points < 64 {
        return Err(Error::Usage(format!(
            "need at least 64 contour points, got {contour_points}"
        )));
    }
    window.validate()?;
    let kappa = equation.horizons.kappa_plus;
    let map = WronskianMap {
        equation: *equation,
        order: 28,
        exclusion: 1e-3 * kappa,
    };
    let start = (contour_points / 4).max(128);
    let f = |z| map.eval_on_contour(z);
    let (winding, samples_on_contour) = contour_winding(&f, window, start)?;
    if winding < 0 {
        return Err(Error::InternalInvariant(format!(
            "negative winding {winding}: contour orientation or analyticity broke"
        )));
    }
    let mut zeros = Vec::new();
    if winding > 0 {
        locate_zeros(&map, window, kappa, 0, &mut zeros)?;
    }
    Ok(ResonanceReport {
        params: equation.params,
        sector: equation.sector.kind(),
        l: equation.sector.l(),
        branch: equation.branch,
        window: window.as_array(),
        winding,
        zeros,
        samples_on_contour,
    })
}

// ---------------------------------------------------------------------------
// Damped spherical zero mode
// ---------------------------------------------------------------------------

/// Track the spherically symmetric constraint-propagation mode as a function
/// of the damping parameter gamma3 (|gamma3| <= 0.2). At gamma3 = 0 the mode
/// sits exactly at sigma = 0; for gamma3 != 0 it is located by Newton
/// iteration on the connection Wronskian starting from -i gamma3.
pub fn constraint_damping_resonance(p: &BlackHoleParams, gamma3: f64) -> Result<C> {
    if !(gamma3.abs() <= 0.2) {
        return Err(Error::Domain(format!(
            "damping parameter must satisfy |gamma3| <= 0.2, got {gamma3}"
        )));
    }
    let sector = ModeSector::new(SectorKind::Spherical, 0)?;
    let eq = MasterEquation::new(p, sector, Branch::ConstraintDamping(gamma3))?;
    let kappa = eq.horizons.kappa_plus;
    let eval = |s: C| -> Result<C> {
        wronskian(&RadialProblem::new(eq, s, 24, None)?)
    };
    if gamma3 == 0.0 {
        // psi = const solves the undamped equation and is smooth at both
        // horizons, so the Wronskian must vanish at sigma = 0.
        let w0 = eval(C::new(0.0, 0.0))?;
        let wref = eval(C::new(0.0, -0.5 * kappa))?.norm().max(f64::MIN_POSITIVE);
        if w0.norm() > 1e-8 * wref {
            return Err(Error::Continuation(format!(
                "undamped zero mode not found: |W(0)| = {:.3e} vs reference {:.3e}",
                w0.norm(),
                wref
            )));
        }
        return Ok(C::new(0.0, 0.0));
    }
    let scale = gamma3.abs().max(1e-3 * kappa);
    let wref = eval(C::new(0.0, -2.0 * gamma3))?.norm().max(f64::MIN_POSITIVE);
    let mut z = C::new(0.0, -gamma3);
    let h = 1e-7 * scale;
    for _ in 0..40 {
        let w = eval(z)?;
        if w.norm() < 1e-12 * wref {
            return Ok(z);
        }
        let d = (eval(z + c(h))? - eval(z - c(h))?) / c(2.0 * h);
        if d.norm() == 0.0 {
            return Err(Error::Continuation(
                "flat Wronskian during Newton iteration in sigma".into(),
            ));
        }
        let step = w / d;
        z -= step;
        if step.norm() < 1e-12 * scale {
            return Ok(z);
        }
        if z.norm() > 10.0 * (gamma3.abs() + kappa) {
            break;
        }
    }
    Err(Error::Continuation(format!(
        "Newton iteration from -i*{gamma3} did not converge (last iterate {z})"
    )))
}

// ---------------------------------------------------------------------------
// Stability scan
// ---------------------------------------------------------------------------

/// Windowed mode counts over a family of sectors and angular momenta.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityScan {
    pub reports: Vec<ResonanceReport>,
    /// True iff every report found zero modes in the window.
    pub stable: bool,
}

/// Count modes in `window` for every dynamical channel of the listed sectors
/// up to `l_max`. The verdict is stable iff every winding is zero.
pub fn mode_stability_scan(
    p: &BlackHoleParams,
    sectors: &[SectorKind],
    l_max: u32,
    window: Window,
) -> Result<StabilityScan> {
    let mut reports = Vec::new();
    for &kind in sectors {
        let ls: Vec<u32> = match kind {
            SectorKind::ScalarHigh | SectorKind::VectorHigh => (2..=l_max).collect(),
            SectorKind::ScalarDipole | SectorKind::VectorDipole => {
                if l_max >= 1 {
                    vec![1]
                } else {
                    vec![]
                }
            }
            SectorKind::Spherical => {
                return Err(Error::Usage(
                    "the spherically symmetric sector has no dynamical channel to scan".into(),
                ));
            }
        };
        for l in ls {
            for branch in [Branch::Plus, Branch::Minus] {
                let eq = MasterEquation::new(p, ModeSector::new(kind, l)?, branch)?;
                reports.push(count_resonances(&eq, window, 256)?);
            }
        }
    }
    let stable = reports.iter().all(|r| r.winding == 0);
    Ok(StabilityScan { reports, stable })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::ModeSector;

    fn params() -> BlackHoleParams {
        BlackHoleParams::static_params(0.1, 1.0, 0.5, 0.0).unwrap()
    }

    fn scalar_plus(l: u32) -> MasterEquation {
        let kind = if l == 1 { SectorKind::ScalarDipole } else { SectorKind::ScalarHigh };
        MasterEquation::new(&params(), ModeSector::new(kind, l).unwrap(), Branch::Plus).unwrap()
    }

    fn control() -> MasterEquation {
        MasterEquation::new(
            &params(),
            ModeSector::new(SectorKind::Spherical, 0).unwrap(),
            Branch::ScalarWaveControl,
        )
        .unwrap()
    }

    #[test]
    fn series_continues_into_the_integrator() {
        let eq = scalar_plus(2);
        let sigma = C::new(0.4, 0.3);
        let problem = RadialProblem::new(eq, sigma, 28, None).unwrap();
        let sol = local_solution(&problem, HorizonSide::Event).unwrap();
        let (psi0, dpsi0) = sol.eval(sol.delta);
        let (psi1, dpsi1) = sol.eval(1.4 * sol.delta);
        // Independent continuation of the same data by the ODE integrator.
        let p = eq.params;
        let pot = potential_fn(&eq).unwrap();
        let sig2 = sigma * sigma;
        let rhs = move |r: f64, y: &[C; 2]| {
            let mu = mu_generic(&p, r);
            [y[1] / c(mu), (c(pot(r)) - sig2) * y[0] / c(mu)]
        };
        let r0 = sol.start_radius();
        let r1 = sol.r_h + sol.eps * 1.4 * sol.delta;
        let y0 = [psi0, c(mu_generic(&p, r0)) * dpsi0];
        let y1 = integrate_to(&rhs, r0, r1, y0).unwrap();
        let psi1_ode = y1[0];
        let dpsi1_ode = y1[1] / c(mu_generic(&p, r1));
        assert!((psi1 - psi1_ode).norm() < 1e-8 * psi1.norm());
        assert!((dpsi1 - dpsi1_ode).norm() < 1e-8 * dpsi1.norm());
    }

    #[test]
    fn wronskian_is_match_radius_independent() {
        let eq = scalar_plus(2);
        let sigma = C::new(0.35, 0.22);
        let h = eq.horizons;
        let r1 = h.r_minus + 0.3 * (h.r_plus - h.r_minus);
        let r2 = h.r_minus + 0.72 * (h.r_plus - h.r_minus);
        let w1 = wronskian(&RadialProblem::new(eq, sigma, 28, Some(r1)).unwrap()).unwrap();
        let w2 = wronskian(&RadialProblem::new(eq, sigma, 28, Some(r2)).unwrap()).unwrap();
        assert!((w1 - w2).norm() < 1e-9 * w1.norm(), "w1={w1}, w2={w2}");
    }

    #[test]
    fn wronskian_conjugation_symmetry() {
        for eq in [scalar_plus(2), control()] {
            let sigma = C::new(0.45, 0.18);
            let mirrored = C::new(-sigma.re, sigma.im); // -conj(sigma)
            let w = wronskian(&RadialProblem::new(eq, sigma, 28, None).unwrap()).unwrap();
            let wm = wronskian(&RadialProblem::new(eq, mirrored, 28, None).unwrap()).unwrap();
            assert!((wm - w.conj()).norm() < 1e-10 * w.norm(), "w={w}, wm={wm}");
        }
    }

    #[test]
    fn truncation_order_is_converged() {
        let eq = scalar_plus(3);
        let sigma = C::new(0.6, 0.4);
        let lo = wronskian(&RadialProblem::new(eq, sigma, 22, None).unwrap()).unwrap();
        let hi = wronskian(&RadialProblem::new(eq, sigma, 32, None).unwrap()).unwrap();
        assert!((lo - hi).norm() < 1e-9 * hi.norm());
    }

    #[test]
    fn control_zero_mode_is_linear_in_r() {
        // sigma = 0 regular branch of the radial wave operator is psi
        // proportional to r; the two horizon branches are therefore dependent
        // and the Wronskian vanishes.
        let eq = control();
        let problem = RadialProblem::new(eq, C::new(0.0, 0.0), 28, None).unwrap();
        let fe = frobenius_solution(&problem, HorizonSide::Event).unwrap();
        let ratio = fe.dpsi / fe.psi;
        assert!((ratio - c(1.0 / fe.r_start)).norm() < 1e-8);
        let w0 = wronskian(&problem).unwrap();
        let kappa = eq.horizons.kappa_plus;
        let wref = wronskian(
            &RadialProblem::new(eq, C::new(0.0, 0.5 * kappa), 28, None).unwrap(),
        )
        .unwrap();
        assert!(w0.norm() < 1e-8 * wref.norm(), "w0={w0}, wref={wref}");
    }

    #[test]
    fn indicial_collision_is_loud() {
        let eq = scalar_plus(2);
        let kappa_minus = eq.horizons.kappa_minus;
        // At sigma = -i n kappa the two exponents differ by the integer n.
        let problem =
            RadialProblem::new(eq, C::new(0.0, -kappa_minus), 28, None).unwrap();
        let err = frobenius_solution(&problem, HorizonSide::Event).unwrap_err();
        assert!(matches!(err, Error::IndicialDegeneracy(_)), "got {err:?}");
    }

    #[test]
    fn control_winding_counts_the_stationary_mode() {
        let eq = control();
        let kappa = eq.horizons.kappa_plus;
        let win = Window::new(-0.6 * kappa, 0.63 * kappa, -0.57 * kappa, 0.6 * kappa).unwrap();
        let report = count_resonances(&eq, win, 64).unwrap();
        assert_eq!(report.winding, 1);
        assert_eq!(report.zeros.len(), 1);
        let z = C::new(report.zeros[0].re, report.zeros[0].im);
        assert!(z.norm() < 1e-5 * kappa, "zero at {z}");
        // Same channel, window away from the origin: nothing there.
        let off = Window::new(0.2 * kappa, 1.2 * kappa, 0.1 * kappa, 1.1 * kappa).unwrap();
        let empty = count_resonances(&eq, off, 64).unwrap();
        assert_eq!(empty.winding, 0);
        assert!(empty.zeros.is_empty());
    }

    #[test]
    fn winding_is_additive_over_a_partition() {
        let eq = control();
        let kappa = eq.horizons.kappa_plus;
        let win = Window::new(-0.7 * kappa, 0.61 * kappa, -0.63 * kappa, 0.58 * kappa).unwrap();
        let map = WronskianMap { equation: eq, order: 24, exclusion: 1e-3 * kappa };
        let f = |z| map.eval_on_contour(z);
        let (total, _) = contour_winding(&f, win, 32).unwrap();
        let mut parts = 0;
        for q in win.quadrants(0.543, 0.467) {
            parts += contour_winding(&f, q, 32).unwrap().0;
        }
        assert_eq!(total, 1);
        assert_eq!(parts, total);
    }

    #[test]
    fn scalar_branches_have_no_upper_half_plane_modes() {
        let eq = scalar_plus(2);
        let kappa = eq.horizons.kappa_plus;
        let win =
            Window::new(-3.0 * kappa, 3.0 * kappa, 1e-3 * kappa, 3.0 * kappa).unwrap();
        let report = count_resonances(&eq, win, 64).unwrap();
        assert_eq!(report.winding, 0, "report: {}", report.to_json());
    }

    #[test]
    fn damped_mode_drifts_into_the_lower_half_plane() {
        let p = params();
        let s0 = constraint_damping_resonance(&p, 0.0).unwrap();
        assert!(s0.norm() < 1e-10);
        for g in [0.005, 0.01] {
            let s = constraint_damping_resonance(&p, g).unwrap();
            let drift = s.im / g;
            assert!(
                (-1.15..=-0.85).contains(&drift),
                "gamma3={g}: sigma={s}, drift={drift}"
            );
            assert!(s.re.abs() < 0.1 * g, "gamma3={g}: sigma={s}");
        }
    }

    #[test]
    fn report_round_trips_through_json() {
        let eq = control();
        let kappa = eq.horizons.kappa_plus;
        let win = Window::new(0.2 * kappa, 1.2 * kappa, 0.1 * kappa, 1.1 * kappa).unwrap();
        let report = count_resonances(&eq, win, 64).unwrap();
        let text = report.to_json();
        for key in ["params", "sector", "l", "branch", "window", "winding", "zeros"] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
        let back: ResonanceReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.winding, report.winding);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let eq = scalar_plus(2);
        assert!(RadialProblem::new(eq, C::new(0.3, 0.0), 3, None).is_err());
        let h = eq.horizons;
        assert!(RadialProblem::new(
            eq,
            C::new(0.3, 0.0),
            28,
            Some(h.r_minus + 1e-4 * (h.r_plus - h.r_minus))
        )
        .is_err());
        let win = Window::new(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(count_resonances(&eq, win, 10), Err(Error::Usage(_))));
        assert!(Window::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(constraint_damping_resonance(&params(), 0.5).is_err());
    }
}
