//! Subprincipal-symbol endomorphisms of the gauge-fixed linearized operator
//! at the trapped set (a 14x14 matrix over the photon sphere) and at the two
//! horizon radial sets (10x10 matrices), together with their predicted
//! eigenvalue multisets and the parameter dictionary tying the abstract
//! coefficients to a black-hole background.
//!
//! The matrices are hard-coded entry tables in the fixed bundle splitting
//! (ten symmetric 2-tensor components followed by four 1-form components at
//! the trapped set; 7 + 3 at the radial sets). The predicted spectra serve as
//! transcription oracles, and the invariant-subspace certificates catch
//! row/column transpositions that the spectrum alone would miss.

use crate::error::{Error, Result};
use crate::resonance::HorizonSide;
use crate::spacetime::{self, mu, BlackHoleParams};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

type C = Complex64;

/// Scaled coefficients of the trapped-set endomorphism. Primed quantities are
/// the damping parameters scaled by the photon-sphere data (see
/// [`photon_sphere_dictionary`]); double-primed ones carry the time-gauge
/// derivative and provably never enter the spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrappedSetParams {
    pub gamma1p: f64,
    pub gamma2p: f64,
    pub gamma3p: f64,
    pub gamma1pp: f64,
    pub gamma2pp: f64,
    pub gamma3pp: f64,
    pub qp: f64,
}

/// Coefficients of a radial-set endomorphism at one horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSetParams {
    /// Surface gravity of the chosen horizon.
    pub kappa: f64,
    /// Horizon value of the gauge smoothing function c_pm.
    pub c_pm: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Charge coefficient at the horizon; does not affect the spectrum.
    pub q: f64,
    pub side: HorizonSide,
}

/// Scale the damping parameters (gamma1, gamma2, gamma3) and the charge by
/// the photon-sphere data of a background: with a^2 = mu(r_P) and r = r_P,
/// gamma1' = a^-2 r gamma1 / 2, gamma2' = a^-2 r gamma2, gamma3' = a^-2 r
/// gamma3, gamma_i'' the same with a^-2 replaced by T', halving as for the
/// primes, q = -Q_e a^-1 r^-2 and q' = a^-1 r q / 2.
pub fn photon_sphere_dictionary(
    p: &BlackHoleParams,
    gamma1: f64,
    gamma2: f64,
    gamma3: f64,
) -> Result<TrappedSetParams> {
    let h = spacetime::horizons(p)?;
    let r = h.r_photon();
    let alpha2 = mu(p, r)?;
    if !(alpha2 > 0.0) {
        return Err(Error::Numerical(format!(
            "mu must be positive at the photon sphere, got {alpha2}"
        )));
    }
    let gauge = spacetime::star_gauge(p)?;
    let tp = gauge.t_prime(r);
    let q = -p.charge_e / (alpha2.sqrt() * r * r);
    Ok(TrappedSetParams {
        gamma1p: 0.5 * r * gamma1 / alpha2,
        gamma2p: r * gamma2 / alpha2,
        gamma3p: r * gamma3 / alpha2,
        gamma1pp: 0.5 * r * tp * gamma1,
        gamma2pp: r * tp * gamma2,
        gamma3pp: r * tp * gamma3,
        qp: 0.5 * r * q / alpha2.sqrt(),
    })
}

impl RadialSetParams {
    /// Radial-set coefficients of a background at one horizon. The smoothing
    /// constant is the horizon limit of (mu T' -+ 1)/(+-mu), which evaluates
    /// to -c^2/2 in the everywhere-timelike gauge; kappa comes from the
    /// horizon data.
    pub fn from_background(
        p: &BlackHoleParams,
        side: HorizonSide,
        gamma1: f64,
        gamma2: f64,
        gamma3: f64,
        q: f64,
    ) -> Result<Self> {
        let h = spacetime::horizons(p)?;
        let gauge = spacetime::star_gauge(p)?;
        let kappa = match side {
            HorizonSide::Event => h.kappa_minus,
            HorizonSide::Cosmological => h.kappa_plus,
        };
        Ok(RadialSetParams {
            kappa,
            c_pm: -0.5 * gauge.c_squared,
            gamma1,
            gamma2,
            gamma3,
            q,
            side,
        })
    }
}

// ---------------------------------------------------------------------------
// Trapped-set 14x14 endomorphism
// ---------------------------------------------------------------------------

// Entry tables in the splitting f1..f10 (symmetric 2-tensors), f11..f14
// (1-forms). Each is one summand of the (1,1) block.

#[rustfmt::skip]
const T11_BASE: [[f64; 10]; 10] = [
    [ 0.0, -4.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [-2.0,  0.0, -2.0,  0.0, -2.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  2.0,  0.0,  0.0,  0.0, -2.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0, -2.0,  0.0,  0.0,  0.0],
    [ 0.0, -4.0,  0.0,  0.0,  0.0, -4.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0, -2.0,  0.0,  2.0,  0.0,  0.0, -2.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0, -2.0,  0.0,  0.0,  0.0,  0.0, -2.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  4.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
];

#[rustfmt::skip]
const T11_G1P: [[f64; 10]; 10] = [
    [ 2.0,  0.0,  4.0,  0.0,  2.0,  0.0,  0.0,  2.0,  0.0,  2.0],
    [ 0.0,  2.0,  0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0,  0.0],
    [ 1.0,  0.0,  2.0,  0.0, -1.0,  0.0,  0.0,  1.0,  0.0, -1.0],
    [ 0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0,  0.0,  2.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
];

#[rustfmt::skip]
const T11_G1PP: [[f64; 10]; 10] = [
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 1.0,  0.0,  2.0,  0.0,  1.0,  0.0,  0.0,  1.0,  0.0,  1.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  4.0,  0.0,  0.0,  0.0,  4.0,  0.0,  0.0,  0.0,  0.0],
    [ 1.0,  0.0,  2.0,  0.0, -1.0,  0.0,  0.0,  1.0,  0.0, -1.0],
    [ 0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0,  0.0,  2.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
];

#[rustfmt::skip]
const T11_G2P: [[f64; 10]; 10] = [
    [-1.0,  0.0, -2.0,  0.0, -1.0,  0.0,  0.0, -1.0,  0.0, -1.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 1.0,  0.0,  2.0,  0.0,  1.0,  0.0,  0.0,  1.0,  0.0,  1.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 1.0,  0.0,  2.0,  0.0,  1.0,  0.0,  0.0,  1.0,  0.0,  1.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 1.0,  0.0,  2.0,  0.0,  1.0,  0.0,  0.0,  1.0,  0.0,  1.0],
];

#[rustfmt::skip]
const T11_G2PP: [[f64; 10]; 10] = [
    [ 0.0, -2.0,  0.0,  0.0,  0.0, -2.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  2.0,  0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  2.0,  0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  2.0,  0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0,  0.0],
];

#[rustfmt::skip]
const T22_BASE: [[f64; 4]; 4] = [
    [ 0.0, -2.0,  0.0,  0.0],
    [-2.0,  0.0, -2.0,  0.0],
    [ 0.0,  2.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0],
];

#[rustfmt::skip]
const T21_QP: [[f64; 10]; 4] = [
    [ 0.0,  0.0,  0.0,  0.0,  0.0, -2.0,  0.0,  0.0,  0.0,  0.0],
    [-1.0,  0.0, -2.0,  0.0,  1.0,  0.0,  0.0, -1.0,  0.0, -1.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  2.0,  0.0,  0.0,  0.0],
];

#[rustfmt::skip]
const T12_4QP: [[f64; 4]; 10] = [
    [ 0.0,  1.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0],
    [ 0.0, -1.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0],
    [ 0.0, -1.0,  0.0,  0.0],
    [-1.0,  0.0, -1.0,  0.0],
    [ 0.0,  0.0,  0.0, -1.0],
    [ 0.0,  1.0,  0.0,  0.0],
    [ 0.0,  0.0,  0.0,  0.0],
    [ 0.0,  1.0,  0.0,  0.0],
];

/// Assemble the 14x14 trapped-set endomorphism (a real matrix; its spectrum
/// is complex through the charge coupling).
pub fn build_trapped_matrix(p: &TrappedSetParams) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(14, 14);
    for i in 0..10 {
        for j in 0..10 {
            m[(i, j)] = T11_BASE[i][j] + p.gamma1p * T11_G1P[i][j] - p.gamma1pp * T11_G1PP[i][j]
                + p.gamma2p * T11_G2P[i][j]
                + p.gamma2pp * T11_G2PP[i][j];
        }
    }
    for i in 0..4 {
        for j in 0..4 {
            m[(10 + i, 10 + j)] = T22_BASE[i][j];
        }
    }
    // First 1-form row gets gamma3', the second its gauge-derivative twin.
    m[(10, 10)] += p.gamma3p;
    m[(10, 12)] += p.gamma3p;
    m[(11, 10)] += p.gamma3pp;
    m[(11, 12)] += p.gamma3pp;
    for i in 0..4 {
        for j in 0..10 {
            m[(10 + i, j)] = p.qp * T21_QP[i][j];
        }
    }
    for i in 0..10 {
        for j in 0..4 {
            m[(i, 10 + j)] = 4.0 * p.qp * T12_4QP[i][j];
        }
    }
    m
}

/// Predicted trapped-set eigenvalue multiset:
/// {0 (x5), 2 gamma1' (x2), 4 gamma1', 2 gamma2', gamma3', +-2 i q' sqrt(2) (x2 each)}.
pub fn trapped_predicted_spectrum(p: &TrappedSetParams) -> Vec<C> {
    let s = 2.0 * std::f64::consts::SQRT_2 * p.qp;
    vec![
        C::new(0.0, 0.0),
        C::new(0.0, 0.0),
        C::new(0.0, 0.0),
        C::new(0.0, 0.0),
        C::new(0.0, 0.0),
        C::new(2.0 * p.gamma1p, 0.0),
        C::new(2.0 * p.gamma1p, 0.0),
        C::new(4.0 * p.gamma1p, 0.0),
        C::new(2.0 * p.gamma2p, 0.0),
        C::new(p.gamma3p, 0.0),
        C::new(0.0, s),
        C::new(0.0, s),
        C::new(0.0, -s),
        C::new(0.0, -s),
    ]
}

// ---------------------------------------------------------------------------
// Radial-set 10x10 endomorphisms
// ---------------------------------------------------------------------------

/// Assemble the 10x10 radial-set endomorphism at the chosen horizon.
pub fn build_radial_matrix(p: &RadialSetParams) -> DMatrix<f64> {
    // Upper sign (s = +1) is the cosmological horizon, lower the event one.
    let s = match p.side {
        HorizonSide::Cosmological => 1.0,
        HorizonSide::Event => -1.0,
    };
    let c = p.c_pm;
    let k2 = 2.0 * p.kappa;
    let mut m = DMatrix::<f64>::zeros(10, 10);
    for (i, d) in [0.0, 2.0, 1.0, 4.0, 3.0, 2.0, 2.0, 0.0, 2.0, 1.0].iter().enumerate() {
        m[(i, i)] = k2 * d;
    }
    // (1,1) block, gamma1 summand.
    m[(0, 0)] += p.gamma1 * 2.0;
    m[(1, 0)] += p.gamma1 * (-s * c);
    m[(1, 5)] += p.gamma1 * (s * 0.5);
    m[(2, 2)] += p.gamma1;
    m[(3, 5)] += p.gamma1 * (-c);
    m[(4, 2)] += p.gamma1 * (-s * c);
    // (1,1) block, gamma2 summand.
    m[(1, 0)] += p.gamma2 * (s * 2.0 * c);
    m[(1, 5)] += p.gamma2 * (-s);
    m[(5, 0)] += p.gamma2 * (-2.0 * c);
    m[(5, 5)] += p.gamma2;
    // (2,2) block, gamma3 summand.
    m[(7, 7)] += p.gamma3;
    m[(8, 7)] += p.gamma3 * (-s * c);
    // (2,1) block, q summand.
    m[(8, 1)] += p.q * (-s);
    m[(8, 5)] += p.q * (-0.5);
    m[(9, 2)] += p.q * (-s);
    // (1,2) block, 2q summand.
    m[(1, 7)] += 2.0 * p.q * (-1.0);
    m[(4, 9)] += 2.0 * p.q * (-1.0);
    m[(5, 7)] += 2.0 * p.q * (-s);
    m
}

/// Predicted radial-set eigenvalue multiset:
/// {2k, 2k+g1, 4k (x3), 4k+g2, 6k, 8k, 2 g1, g3} with k the surface gravity.
pub fn radial_predicted_spectrum(p: &RadialSetParams) -> Vec<C> {
    let k = p.kappa;
    [
        2.0 * k,
        2.0 * k + p.gamma1,
        4.0 * k,
        4.0 * k,
        4.0 * k,
        4.0 * k + p.gamma2,
        6.0 * k,
        8.0 * k,
        2.0 * p.gamma1,
        p.gamma3,
    ]
    .iter()
    .map(|&x| C::new(x, 0.0))
    .collect()
}

// ---------------------------------------------------------------------------
// Spectrum verification
// ---------------------------------------------------------------------------

/// Certified spectrum of a subprincipal endomorphism.
///
/// Both endomorphisms are defective (their zero eigenvalues sit in nontrivial
/// Jordan blocks), so QR iteration only locates those eigenvalues to roughly
/// the machine epsilon taken to the 1/k power for a size-k block. The
/// certified spectrum therefore comes from an exact characteristic-polynomial
/// identity instead: the matrix is rebuilt in rational arithmetic, its
/// characteristic polynomial is computed exactly, and the result must equal
/// the predicted factorization coefficient for coefficient. The raw QR values
/// are kept for audit only.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Certified eigenvalues (the closed-form multiset), sorted by (re, im).
    pub eigenvalues: Vec<C>,
    /// Direct QR eigenvalues of the floating-point matrix, sorted by (re, im).
    pub raw_eigenvalues: Vec<C>,
    pub min_real_part: f64,
    /// True iff every certified eigenvalue has real part >= -1e-10.
    pub nonnegative: bool,
}

fn sort_complex(v: &mut [C]) {
    // total_cmp keeps the sort well defined even if the audit-only QR values
    // contain non-finite entries (the certified values never do).
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn big(x: f64) -> BigRational {
    BigRational::from_float(x).expect("parameters must be finite")
}

type RatMatrix = Vec<Vec<BigRational>>;

fn rat_zeros(n: usize) -> RatMatrix {
    vec![vec![BigRational::zero(); n]; n]
}

/// Add `coef * table` into `m` (the table block starting at `(row0, col0)`).
fn rat_acc(m: &mut RatMatrix, coef: &BigRational, table: &[&[f64]], row0: usize, col0: usize) {
    for (i, row) in table.iter().enumerate() {
        for (j, &t) in row.iter().enumerate() {
            if t != 0.0 {
                m[row0 + i][col0 + j] += coef * big(t);
            }
        }
    }
}

fn trapped_matrix_rational(p: &TrappedSetParams) -> RatMatrix {
    let mut m = rat_zeros(14);
    let one = BigRational::from_integer(BigInt::from(1));
    let base_rows: Vec<&[f64]> = T11_BASE.iter().map(|r| &r[..]).collect();
    rat_acc(&mut m, &one, &base_rows, 0, 0);
    for (coef, table) in [
        (big(p.gamma1p), &T11_G1P),
        (-big(p.gamma1pp), &T11_G1PP),
        (big(p.gamma2p), &T11_G2P),
        (big(p.gamma2pp), &T11_G2PP),
    ] {
        let rows: Vec<&[f64]> = table.iter().map(|r| &r[..]).collect();
        rat_acc(&mut m, &coef, &rows, 0, 0);
    }
    let rows22: Vec<&[f64]> = T22_BASE.iter().map(|r| &r[..]).collect();
    rat_acc(&mut m, &one, &rows22, 10, 10);
    m[10][10] += big(p.gamma3p);
    m[10][12] += big(p.gamma3p);
    m[11][10] += big(p.gamma3pp);
    m[11][12] += big(p.gamma3pp);
    let rows21: Vec<&[f64]> = T21_QP.iter().map(|r| &r[..]).collect();
    rat_acc(&mut m, &big(p.qp), &rows21, 10, 0);
    let rows12: Vec<&[f64]> = T12_4QP.iter().map(|r| &r[..]).collect();
    rat_acc(&mut m, &(big(4.0) * big(p.qp)), &rows12, 0, 10);
    m
}

fn radial_matrix_rational(p: &RadialSetParams) -> RatMatrix {
    let s = match p.side {
        HorizonSide::Cosmological => big(1.0),
        HorizonSide::Event => big(-1.0),
    };
    let c = big(p.c_pm);
    let (g1, g2, g3, q) = (big(p.gamma1), big(p.gamma2), big(p.gamma3), big(p.q));
    let k2 = big(2.0) * big(p.kappa);
    let mut m = rat_zeros(10);
    for (i, d) in [0.0, 2.0, 1.0, 4.0, 3.0, 2.0, 2.0, 0.0, 2.0, 1.0].iter().enumerate() {
        m[i][i] = &k2 * big(*d);
    }
    let half = big(0.5);
    m[0][0] += &g1 * big(2.0);
    m[1][0] += &g1 * (-&s * &c);
    m[1][5] += &g1 * (&s * &half);
    m[2][2] += g1.clone();
    m[3][5] += &g1 * (-&c);
    m[4][2] += &g1 * (-&s * &c);
    m[1][0] += &g2 * (&s * big(2.0) * &c);
    m[1][5] += &g2 * (-&s);
    m[5][0] += &g2 * (big(-2.0) * &c);
    m[5][5] += g2.clone();
    m[7][7] += g3.clone();
    m[8][7] += &g3 * (-&s * &c);
    m[8][1] += &q * (-&s);
    m[8][5] += &q * (-&half);
    m[9][2] += &q * (-&s);
    m[1][7] += big(-2.0) * &q;
    m[4][9] += big(-2.0) * &q;
    m[5][7] += big(-2.0) * &q * &s;
    m
}

/// Exact characteristic polynomial of an integer matrix, returned as the
/// coefficients [c1, ..., cn] of x^n + c1 x^(n-1) + ... + cn
/// (Faddeev-LeVerrier recursion; every division is exact over the integers).
fn charpoly_int(m: &[Vec<BigInt>]) -> Vec<BigInt> {
    let n = m.len();
    let mut mk = m.to_vec();
    let mut coeffs = Vec::with_capacity(n);
    for k in 1..=n {
        let mut tr = BigInt::zero();
        for (i, row) in mk.iter().enumerate() {
            tr += &row[i];
        }
        let (ck, rem) = (-tr).div_rem(&BigInt::from(k as i64));
        assert!(rem.is_zero(), "integer Faddeev-LeVerrier division must be exact");
        coeffs.push(ck.clone());
        if k == n {
            break;
        }
        for (i, row) in mk.iter_mut().enumerate() {
            row[i] += &ck;
        }
        let mut next = vec![vec![BigInt::zero(); n]; n];
        for i in 0..n {
            for l in 0..n {
                if m[i][l].is_zero() {
                    continue;
                }
                for j in 0..n {
                    if !mk[l][j].is_zero() {
                        next[i][j] += &m[i][l] * &mk[l][j];
                    }
                }
            }
        }
        mk = next;
    }
    coeffs
}

/// Multiply out monic integer factors: real roots (x - r) plus `quad` copies
/// of (x^2 + quad_const). Same coefficient convention as [`charpoly_int`].
fn poly_from_factors_int(real_roots: &[BigInt], quad: usize, quad_const: &BigInt) -> Vec<BigInt> {
    let mut poly = vec![BigInt::from(1)];
    for root in real_roots {
        let mut next = vec![BigInt::zero(); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * root;
        }
        poly = next;
    }
    for _ in 0..quad {
        let mut next = vec![BigInt::zero(); poly.len() + 2];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 2] += c * quad_const;
        }
        poly = next;
    }
    poly.remove(0);
    poly
}

/// Verify that the rational matrix has exactly the predicted characteristic
/// polynomial (real roots plus `quad` copies of x^2 + quad_const), and that
/// the floating-point matrix agrees with the rational one to rounding error.
/// The common denominator is cleared first so the whole identity runs over
/// plain integers.
fn certify_spectrum(
    m: &DMatrix<f64>,
    mrat: &RatMatrix,
    real_roots: &[BigRational],
    quad: usize,
    quad_const: &BigRational,
    what: &str,
) -> Result<()> {
    use num_traits::ToPrimitive;
    let scale = m.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
    for (i, row) in mrat.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let vf = v.to_f64().unwrap_or(f64::NAN);
            if (m[(i, j)] - vf).abs() > 1e-13 * scale {
                return Err(Error::InternalInvariant(format!(
                    "{what}: float and rational assemblies disagree at ({i}, {j})"
                )));
            }
        }
    }
    let mut den = BigInt::from(1);
    for v in mrat.iter().flatten() {
        den = den.lcm(v.denom());
    }
    for r in real_roots {
        den = den.lcm(r.denom());
    }
    den = den.lcm(quad_const.denom());
    let den = BigRational::from_integer(den);
    let to_int = |v: &BigRational, s: &BigRational| -> BigInt {
        let scaled = v * s;
        debug_assert!(scaled.is_integer());
        scaled.to_integer()
    };
    let mint: Vec<Vec<BigInt>> = mrat
        .iter()
        .map(|row| row.iter().map(|v| to_int(v, &den)).collect())
        .collect();
    let got = charpoly_int(&mint);
    let scaled_roots: Vec<BigInt> = real_roots.iter().map(|r| to_int(r, &den)).collect();
    let den2 = &den * &den;
    let want = poly_from_factors_int(&scaled_roots, quad, &to_int(quad_const, &den2));
    for (k, (g, w)) in got.iter().zip(&want).enumerate() {
        if g != w {
            return Err(Error::LemmaMismatch(format!(
                "{what}: characteristic polynomial coefficient {} differs from the predicted \
                 factorization",
                k + 1,
            )));
        }
    }
    Ok(())
}

fn spectrum_report(
    m: &DMatrix<f64>,
    mrat: &RatMatrix,
    predicted: Vec<C>,
    real_roots: &[BigRational],
    quad: usize,
    quad_const: &BigRational,
    what: &str,
) -> Result<SpectrumReport> {
    certify_spectrum(m, mrat, real_roots, quad, quad_const, what)?;
    let mut raw: Vec<C> = m.complex_eigenvalues().iter().copied().collect();
    sort_complex(&mut raw);
    let mut eigenvalues = predicted;
    sort_complex(&mut eigenvalues);
    let min_real_part = eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    Ok(SpectrumReport {
        nonnegative: min_real_part >= -1e-10,
        eigenvalues,
        raw_eigenvalues: raw,
        min_real_part,
    })
}

/// Certified spectrum of the trapped-set endomorphism. The predicted multiset
/// is verified through an exact characteristic-polynomial identity; any
/// disagreement is a lemma mismatch.
pub fn eig_trapped(p: &TrappedSetParams) -> Result<SpectrumReport> {
    let (g1, g2, g3, q) = (big(p.gamma1p), big(p.gamma2p), big(p.gamma3p), big(p.qp));
    let real_roots = [
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
        big(2.0) * &g1,
        big(2.0) * &g1,
        big(4.0) * &g1,
        big(2.0) * &g2,
        g3,
    ];
    spectrum_report(
        &build_trapped_matrix(p),
        &trapped_matrix_rational(p),
        trapped_predicted_spectrum(p),
        &real_roots,
        2,
        &(big(8.0) * &q * &q),
        "trapped set",
    )
}

/// Certified spectrum of a radial-set endomorphism; see [`eig_trapped`].
pub fn eig_radial(p: &RadialSetParams) -> Result<SpectrumReport> {
    let k = big(p.kappa);
    let (g1, g2, g3) = (big(p.gamma1), big(p.gamma2), big(p.gamma3));
    let real_roots = [
        big(2.0) * &k,
        big(2.0) * &k + &g1,
        big(4.0) * &k,
        big(4.0) * &k,
        big(4.0) * &k,
        big(4.0) * &k + &g2,
        big(6.0) * &k,
        big(8.0) * &k,
        big(2.0) * &g1,
        g3,
    ];
    spectrum_report(
        &build_radial_matrix(p),
        &radial_matrix_rational(p),
        radial_predicted_spectrum(p),
        &real_roots,
        0,
        &BigRational::zero(),
        "radial set",
    )
}

/// Spectral threshold proxy: the minimum real part of the radial-set
/// spectrum. Nonnegative damping gives a nonnegative value; a negative value
/// flags a threshold violation.
pub fn threshold_beta_hat(p: &RadialSetParams) -> Result<f64> {
    Ok(eig_radial(p)?.min_real_part)
}

// ---------------------------------------------------------------------------
// Structural certificates
// ---------------------------------------------------------------------------

/// Exact structural checks from the eigenvalue lemma proofs: with zero charge
/// coupling the (10, 4) split is invariant (zero off-diagonal blocks), and for
/// any parameters the endomorphism preserves span{f4, f7, f9, f14} and
/// span{f1-f8, f2-f6, f1-f3+f8, f11-f13}.
pub fn trapped_structure_ok(p: &TrappedSetParams) -> bool {
    let m = build_trapped_matrix(p);
    // Uncharged decoupling: exact zero blocks.
    if p.qp == 0.0 {
        for i in 0..10 {
            for j in 10..14 {
                if m[(i, j)] != 0.0 || m[(j, i)] != 0.0 {
                    return false;
                }
            }
        }
    }
    let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
    let tol = 1e-12 * scale;
    // First subspace: coordinate span {f4, f7, f9, f14} (indices 3, 6, 8, 13).
    let keep = [3usize, 6, 8, 13];
    for &j in &keep {
        for i in 0..14 {
            if !keep.contains(&i) && m[(i, j)].abs() > tol {
                return false;
            }
        }
    }
    // Second subspace: w in span{f1-f8, f2-f6, f1-f3+f8, f11-f13} iff
    // w vanishes outside indices {0,1,2,5,7,10,12} and satisfies
    // w1+w5 = 0, w10+w12 = 0, w0+w7+2 w2 = 0.
    let basis: [Vec<(usize, f64)>; 4] = [
        vec![(0, 1.0), (7, -1.0)],
        vec![(1, 1.0), (5, -1.0)],
        vec![(0, 1.0), (2, -1.0), (7, 1.0)],
        vec![(10, 1.0), (12, -1.0)],
    ];
    let support = [0usize, 1, 2, 5, 7, 10, 12];
    for b in &basis {
        let mut w = [0.0f64; 14];
        for i in 0..14 {
            for &(j, coef) in b {
                w[i] += coef * m[(i, j)];
            }
        }
        for (i, &wi) in w.iter().enumerate() {
            if !support.contains(&i) && wi.abs() > tol {
                return false;
            }
        }
        if (w[1] + w[5]).abs() > tol
            || (w[10] + w[12]).abs() > tol
            || (w[0] + w[7] + 2.0 * w[2]).abs() > tol
        {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Randomized audits
// ---------------------------------------------------------------------------

fn fmt_complex(z: C) -> String {
    format!("{:+.12e}{:+.12e}i", z.re, z.im)
}

/// Seeded random draws of the trapped-set matrix, each verified against the
/// predicted spectrum; returns a CSV audit (one row per draw).
pub fn trapped_audit_csv(seed: u64, draws: usize) -> Result<String> {
    let mut rng = crate::sampling::rng(seed);
    let mut out = String::from(
        "draw,gamma1p,gamma2p,gamma3p,gamma1pp,gamma2pp,gamma3pp,qp,min_real_part,nonnegative,eigenvalues\n",
    );
    for d in 0..draws {
        let p = TrappedSetParams {
            gamma1p: rng.gen_range(0.0..5.0),
            gamma2p: rng.gen_range(0.0..5.0),
            gamma3p: rng.gen_range(0.0..5.0),
            gamma1pp: rng.gen_range(-3.0..3.0),
            gamma2pp: rng.gen_range(-3.0..3.0),
            gamma3pp: rng.gen_range(-3.0..3.0),
            qp: rng.gen_range(-3.0..3.0),
        };
        let rep = eig_trapped(&p)?;
        if !trapped_structure_ok(&p) {
            return Err(Error::InternalInvariant(format!(
                "invariant-subspace certificate failed on draw {d}: {p:?}"
            )));
        }
        let eigs: Vec<String> = rep.eigenvalues.iter().map(|&z| fmt_complex(z)).collect();
        writeln!(
            out,
            "{d},{},{},{},{},{},{},{},{:.12e},{},{}",
            p.gamma1p,
            p.gamma2p,
            p.gamma3p,
            p.gamma1pp,
            p.gamma2pp,
            p.gamma3pp,
            p.qp,
            rep.min_real_part,
            rep.nonnegative,
            eigs.join(";")
        )
        .unwrap();
    }
    Ok(out)
}

/// Seeded random draws of the radial-set matrix on alternating sides, each
/// verified against the predicted spectrum; returns a CSV audit.
pub fn radial_audit_csv(seed: u64, draws: usize) -> Result<String> {
    let mut rng = crate::sampling::rng(seed ^ 0x9e3779b97f4a7c15);
    let mut out =
        String::from("draw,side,kappa,c_pm,gamma1,gamma2,gamma3,q,min_real_part,nonnegative,eigenvalues\n");
    for d in 0..draws {
        let side =
            if d % 2 == 0 { HorizonSide::Event } else { HorizonSide::Cosmological };
        let p = RadialSetParams {
            kappa: rng.gen_range(0.01..2.0),
            c_pm: rng.gen_range(-3.0..3.0),
            gamma1: rng.gen_range(0.0..5.0),
            gamma2: rng.gen_range(0.0..5.0),
            gamma3: rng.gen_range(0.0..5.0),
            q: rng.gen_range(-3.0..3.0),
            side,
        };
        let rep = eig_radial(&p)?;
        let eigs: Vec<String> = rep.eigenvalues.iter().map(|&z| fmt_complex(z)).collect();
        writeln!(
            out,
            "{d},{:?},{},{},{},{},{},{},{:.12e},{},{}",
            p.side,
            p.kappa,
            p.c_pm,
            p.gamma1,
            p.gamma2,
            p.gamma3,
            p.q,
            rep.min_real_part,
            rep.nonnegative,
            eigs.join(";")
        )
        .unwrap();
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_trapped() -> TrappedSetParams {
        TrappedSetParams {
            gamma1p: 0.0,
            gamma2p: 0.0,
            gamma3p: 0.0,
            gamma1pp: 0.0,
            gamma2pp: 0.0,
            gamma3pp: 0.0,
            qp: 0.0,
        }
    }

    #[test]
    fn zero_parameters_give_a_nilpotent_trapped_matrix() {
        let rep = eig_trapped(&zero_trapped()).unwrap();
        assert_eq!(rep.eigenvalues.len(), 14);
        for z in &rep.eigenvalues {
            assert!(z.norm() < 1e-10, "eigenvalue {z}");
        }
        assert!(rep.nonnegative);
    }

    #[test]
    fn trapped_spectrum_matches_the_closed_form() {
        let p = TrappedSetParams {
            gamma1p: 1.0,
            gamma2p: 2.0,
            gamma3p: 3.0,
            gamma1pp: 0.7,
            gamma2pp: -1.3,
            gamma3pp: 2.1,
            qp: 0.0,
        };
        let rep = eig_trapped(&p).unwrap();
        // Distinct nonzero values: 2 g1' = 2, 4 g1' = 4, 2 g2' = 4, g3' = 3.
        let mut nonzero: Vec<f64> =
            rep.eigenvalues.iter().filter(|z| z.norm() > 1e-9).map(|z| z.re).collect();
        nonzero.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(nonzero.len(), 5);
        for (got, want) in nonzero.iter().zip([2.0, 2.0, 3.0, 4.0, 4.0]) {
            assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
        }
    }

    #[test]
    fn charge_coupling_rotates_a_pair_onto_the_imaginary_axis() {
        let mut p = zero_trapped();
        p.qp = 1.0;
        let rep = eig_trapped(&p).unwrap();
        let target = 2.0 * std::f64::consts::SQRT_2;
        let found = rep
            .eigenvalues
            .iter()
            .filter(|z| (z.im.abs() - target).abs() < 1e-9 && z.re.abs() < 1e-9)
            .count();
        assert_eq!(found, 4, "spectrum {:?}", rep.eigenvalues);
    }

    #[test]
    fn negative_damping_is_flagged() {
        let mut p = zero_trapped();
        p.gamma1p = -0.5;
        p.gamma2p = 1.0;
        p.gamma3p = 1.0;
        let rep = eig_trapped(&p).unwrap();
        assert!(rep.min_real_part < -0.9);
        assert!(!rep.nonnegative);
    }

    #[test]
    fn gauge_derivative_terms_never_enter_the_spectrum() {
        let mut rng = crate::sampling::rng(11);
        for _ in 0..25 {
            let mut p = TrappedSetParams {
                gamma1p: rng.gen_range(0.0..5.0),
                gamma2p: rng.gen_range(0.0..5.0),
                gamma3p: rng.gen_range(0.0..5.0),
                gamma1pp: rng.gen_range(-3.0..3.0),
                gamma2pp: rng.gen_range(-3.0..3.0),
                gamma3pp: rng.gen_range(-3.0..3.0),
                qp: rng.gen_range(-3.0..3.0),
            };
            let a = eig_trapped(&p).unwrap();
            p.gamma1pp = rng.gen_range(-3.0..3.0);
            p.gamma2pp = rng.gen_range(-3.0..3.0);
            p.gamma3pp = rng.gen_range(-3.0..3.0);
            let b = eig_trapped(&p).unwrap();
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                assert!((x - y).norm() < 1e-8, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn structure_certificates_hold_on_random_draws() {
        let mut rng = crate::sampling::rng(17);
        for _ in 0..50 {
            let p = TrappedSetParams {
                gamma1p: rng.gen_range(0.0..5.0),
                gamma2p: rng.gen_range(0.0..5.0),
                gamma3p: rng.gen_range(0.0..5.0),
                gamma1pp: rng.gen_range(-3.0..3.0),
                gamma2pp: rng.gen_range(-3.0..3.0),
                gamma3pp: rng.gen_range(-3.0..3.0),
                qp: if rng.gen_bool(0.5) { rng.gen_range(-3.0..3.0) } else { 0.0 },
            };
            assert!(trapped_structure_ok(&p), "params {p:?}");
        }
    }

    #[test]
    fn random_draw_audits_pass() {
        let csv = trapped_audit_csv(42, 200).unwrap();
        assert_eq!(csv.lines().count(), 201);
        let csv = radial_audit_csv(42, 200).unwrap();
        assert_eq!(csv.lines().count(), 201);
    }

    #[test]
    fn undamped_radial_spectrum_is_the_surface_gravity_ladder() {
        let p = RadialSetParams {
            kappa: 0.1,
            c_pm: 0.8,
            gamma1: 0.0,
            gamma2: 0.0,
            gamma3: 0.0,
            q: 0.0,
            side: HorizonSide::Event,
        };
        let rep = eig_radial(&p).unwrap();
        let mut distinct: Vec<f64> = Vec::new();
        for z in &rep.eigenvalues {
            assert!(z.im.abs() < 1e-10);
            if !distinct.iter().any(|d| (d - z.re).abs() < 1e-9) {
                distinct.push(z.re);
            }
        }
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [0.0, 0.2, 0.4, 0.6, 0.8];
        assert_eq!(distinct.len(), want.len());
        for (got, want) in distinct.iter().zip(want) {
            assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
        }
    }

    #[test]
    fn radial_sides_share_their_spectrum() {
        let mut p = RadialSetParams {
            kappa: 0.37,
            c_pm: -1.4,
            gamma1: 1.1,
            gamma2: 0.6,
            gamma3: 2.3,
            q: 1.7,
            side: HorizonSide::Event,
        };
        let a = eig_radial(&p).unwrap();
        p.side = HorizonSide::Cosmological;
        let b = eig_radial(&p).unwrap();
        let me = build_radial_matrix(&RadialSetParams { side: HorizonSide::Event, ..p });
        let mc = build_radial_matrix(&p);
        assert_ne!(me, mc);
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).norm() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn threshold_proxy_tracks_the_smallest_rate() {
        let mut p = RadialSetParams {
            kappa: 0.25,
            c_pm: 0.5,
            gamma1: 0.0,
            gamma2: 0.0,
            gamma3: 0.0,
            q: 0.0,
            side: HorizonSide::Cosmological,
        };
        assert!(threshold_beta_hat(&p).unwrap().abs() < 1e-10);
        p.gamma1 = 0.4;
        p.gamma2 = 0.9;
        p.gamma3 = 0.3;
        // min(2 kappa, 2 gamma1, gamma3) = 0.3
        assert!((threshold_beta_hat(&p).unwrap() - 0.3).abs() < 1e-9);
        p.gamma1 = -0.1;
        assert!((threshold_beta_hat(&p).unwrap() + 0.2).abs() < 1e-9);
    }

    #[test]
    fn photon_sphere_dictionary_matches_the_worked_value() {
        // M=1, Q=1, lambda=0.15: photon sphere at r=2 with mu(2) = 0.05,
        // so q = -1/(sqrt(0.05) * 4) and q' = q * 2 / (2 sqrt(0.05)) = -5.
        let p = BlackHoleParams::static_params(0.15, 1.0, 1.0, 0.0).unwrap();
        let h = spacetime::horizons(&p).unwrap();
        assert!((h.r_photon() - 2.0).abs() < 1e-10);
        let d = photon_sphere_dictionary(&p, 1.0, 1.0, 1.0).unwrap();
        assert!((d.qp + 5.0).abs() < 1e-9, "qp = {}", d.qp);
        let alpha2 = mu(&p, 2.0).unwrap();
        assert!((alpha2 - 0.05).abs() < 1e-12);
        assert!((d.gamma1p - 0.5 * 2.0 / alpha2).abs() < 1e-12);
        assert!((d.gamma2p - 2.0 / alpha2).abs() < 1e-12);
        assert!((d.gamma3p - 2.0 / alpha2).abs() < 1e-12);
        // Derived coefficients feed straight into the verified spectrum.
        assert!(eig_trapped(&d).is_ok());
    }

    #[test]
    fn background_radial_params_take_the_horizon_surface_gravity() {
        let p = BlackHoleParams::static_params(0.1, 1.0, 0.5, 0.0).unwrap();
        let h = spacetime::horizons(&p).unwrap();
        let re = RadialSetParams::from_background(&p, HorizonSide::Event, 1.0, 1.0, 1.0, 0.3)
            .unwrap();
        assert_eq!(re.kappa, h.kappa_minus);
        let rc =
            RadialSetParams::from_background(&p, HorizonSide::Cosmological, 1.0, 1.0, 1.0, 0.3)
                .unwrap();
        assert_eq!(rc.kappa, h.kappa_plus);
        assert!(rc.c_pm < 0.0);
        assert!(eig_radial(&re).is_ok());
        assert!(eig_radial(&rc).is_ok());
    }
}
