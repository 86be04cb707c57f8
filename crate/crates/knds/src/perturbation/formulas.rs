//! Closed-form coefficient functions of the scalar-sector master system,
//! written generically over [`Scalar`] so that the exact same expressions
//! evaluate to numbers or to truncated Taylor series (for analytic
//! derivatives). Everything is expressed through the dimensionless variables
//!
//!   x = 2m/r,  y = lambda r^2/3,  z = Q^2/r^2,  m = k^2 - 2,
//!
//! and the structure function H = m + 3x - 4z.

use crate::error::{Error, Result};
use crate::numeric::Scalar;
use crate::spacetime::{mu_generic, BlackHoleParams};

/// Which of the two decoupled scalar master branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Per-harmonic constants of the scalar sector (shared by l = 1 with k^2 = 2).
#[derive(Clone, Copy, Debug)]
pub struct ScalarSector {
    pub params: BlackHoleParams,
    pub l: u32,
    pub k2: f64,
    /// m = k^2 - 2.
    pub m: f64,
    /// Effective (nonnegative) charge.
    pub q: f64,
    /// c~ = 3 mass + sqrt(9 mass^2 + 4 Q^2 m); root of the decoupling quadratic.
    pub c_tilde: f64,
    /// Numerator of c^(r) = sqrt(9 mass^2 + 4 m Q^2) / r.
    pub c_hat_num: f64,
    /// Decoupling constants c_+ = -Q m / (2 c~), c_- = c~ / (8 Q)
    /// (c_- is +infinity for an uncharged hole; never used in that limit).
    pub c_plus: f64,
    pub c_minus: f64,
    /// b_- = 4Q / (3 mass); b_+ = 1.
    pub b_minus: f64,
}

impl ScalarSector {
    pub fn new(params: &BlackHoleParams, l: u32) -> Result<Self> {
        if l < 1 {
            return Err(Error::Usage(format!("scalar master sector needs l >= 1, got l={l}")));
        }
        let k2 = (l * (l + 1)) as f64;
        let m = k2 - 2.0;
        let q = params.q_eff();
        let mass = params.mass;
        let rad = 9.0 * mass * mass + 4.0 * q * q * m;
        let c_tilde = 3.0 * mass + rad.sqrt();
        let c_hat_num = rad.sqrt();
        let c_plus = -q * m / (2.0 * c_tilde);
        let c_minus = if q > 0.0 { c_tilde / (8.0 * q) } else { f64::INFINITY };
        let b_minus = 4.0 * q / (3.0 * mass);
        Ok(ScalarSector {
            params: *params,
            l,
            k2,
            m,
            q,
            c_tilde,
            c_hat_num,
            c_plus,
            c_minus,
            b_minus,
        })
    }

    /// (x, y, z) at radius r.
    pub fn vars<T: Scalar>(&self, r: T) -> (T, T, T) {
        let x = T::from_f64(2.0 * self.params.mass) / r;
        let y = T::from_f64(self.params.lambda / 3.0) * r * r;
        let z = T::from_f64(self.params.q2()) / (r * r);
        (x, y, z)
    }

    /// H = m + 3x - 4z.
    pub fn h_of<T: Scalar>(&self, r: T) -> T {
        let (x, _, z) = self.vars(r);
        T::from_f64(self.m) + T::from_f64(3.0) * x - T::from_f64(4.0) * z
    }

    pub fn mu_of<T: Scalar>(&self, r: T) -> T {
        mu_generic(&self.params, r)
    }

    /// c^(r) = sqrt(9 mass^2 + 4 m Q^2) / r.
    pub fn c_hat<T: Scalar>(&self, r: T) -> T {
        T::from_f64(self.c_hat_num) / r
    }

    /// Potential of the metric master variable Phi.
    pub fn v_phi<T: Scalar>(&self, r: T) -> T {
        let (x, y, z) = self.vars(r);
        let h = self.h_of(r);
        let mu = self.mu_of(r);
        let m = self.m;
        let n = T::from_f64;
        let x2 = x * x;
        let x3 = x2 * x;
        let z2 = z * z;
        let z3 = z2 * z;
        let poly = n(9.0) * x3 - n(9.0) * (n(2.0) * y + n(6.0) * z - n(m)) * x2
            + (n(72.0) * z2 - n(8.0 * (4.0 * m - 3.0)) * z + n(3.0 * m * m)) * x
            + n(8.0) * (n(9.0) * x * z - n(12.0) * z2 - n(m) * z) * y
            - n(32.0) * z3
            + n(24.0 * m) * z * (z + n(1.0))
            + n(m * m * (m + 2.0));
        mu / (r * r * h * h) * poly
    }

    /// F_Phi / Q: the gravito-electromagnetic source coefficient with its
    /// overall charge factor removed, so Q = 0 stays exactly decoupled.
    pub fn g_phi<T: Scalar>(&self, r: T) -> T {
        let (x, y, z) = self.vars(r);
        let h = self.h_of(r);
        let mu = self.mu_of(r);
        let m = self.m;
        let n = T::from_f64;
        let poly = n(2.0) * (n(3.0) * x - n(8.0) * z) * y + n(2.0) * x * z - n(3.0) * x * x
            + n(6.0) * x
            + n(m * (m + 4.0));
        -n(8.0) * mu / (r * r * r * h * h) * poly
    }

    pub fn f_phi<T: Scalar>(&self, r: T) -> T {
        T::from_f64(self.q) * self.g_phi(r)
    }

    /// Maxwell master potential V_A = mu (k^2/r^2 + 8 Q^2 mu / (r^4 H)).
    pub fn v_a<T: Scalar>(&self, r: T) -> T {
        let h = self.h_of(r);
        let mu = self.mu_of(r);
        let n = T::from_f64;
        let r2 = r * r;
        mu * (n(self.k2) / r2 + n(8.0 * self.params.q2()) * mu / (r2 * r2 * h))
    }

    /// P_Z of the recovery formulas (also enters F_A0).
    pub fn p_z<T: Scalar>(&self, r: T) -> T {
        let (x, y, z) = self.vars(r);
        let m = self.m;
        let n = T::from_f64;
        (-n(6.0) * x + n(16.0) * z) * y + n(3.0) * x * x + (-n(2.0) * z + n(3.0 * m)) * x
            - n(4.0 * m + 8.0) * z
            - n(2.0 * m)
    }

    /// Undifferentiated Maxwell source coefficient F_A0.
    pub fn f_a0<T: Scalar>(&self, r: T) -> T {
        let h = self.h_of(r);
        let mu = self.mu_of(r);
        let n = T::from_f64;
        -n(self.q) * mu / (n(2.0) * r * r) * (h / r - self.p_z(r) / (h * r))
    }

    /// Differentiated Maxwell source coefficient F_A1 = -Q mu / r^2.
    pub fn f_a1<T: Scalar>(&self, r: T) -> T {
        -T::from_f64(self.q) * self.mu_of(r) / (r * r)
    }

    /// Decoupled potentials V_pm = V_A + (c_pm - Q/2r) F_Phi, written so every
    /// charge factor is explicit (no division by Q anywhere).
    pub fn v_pm<T: Scalar>(&self, sign: Sign, r: T) -> T {
        let n = T::from_f64;
        let g = self.g_phi(r);
        let coupling = match sign {
            // (c_+ - Q/2r) Q = -Q^2 (m/(2c~) + 1/(2r))
            Sign::Plus => {
                -n(self.params.q2()) * (n(self.m / (2.0 * self.c_tilde)) + n(0.5) / r) * g
            }
            // (c_- - Q/2r) Q = c~/8 - Q^2/(2r)
            Sign::Minus => (n(self.c_tilde / 8.0) - n(0.5 * self.params.q2()) / r) * g,
        };
        self.v_a(r) + coupling
    }

    /// Deformation generators: H_+ = 1 - 4Q^2/(c~ r), H_- = m + C_-/r with
    /// C_- = 6 mass + 4 Q^2 m / c~.
    pub fn h_pm<T: Scalar>(&self, sign: Sign, r: T) -> T {
        let n = T::from_f64;
        match sign {
            Sign::Plus => n(1.0) - n(4.0 * self.params.q2() / self.c_tilde) / r,
            Sign::Minus => n(self.m) + n(self.c_minus_slope()) / r,
        }
    }

    /// C_- = 6 mass + 4 Q^2 m / c~ (the 1/r coefficient of H_-).
    pub fn c_minus_slope(&self) -> f64 {
        6.0 * self.params.mass + 4.0 * self.params.q2() * self.m / self.c_tilde
    }

    /// Deformed potentials: V~_+ = k^2 mu / (r^2 H_+), V~_- = k^2 m mu / (r^2 H_-).
    pub fn vtilde_pm<T: Scalar>(&self, sign: Sign, r: T) -> T {
        let mu = self.mu_of(r);
        let h = self.h_pm(sign, r);
        let pref = match sign {
            Sign::Plus => self.k2,
            Sign::Minus => self.k2 * self.m,
        };
        T::from_f64(pref) * mu / (r * r * h)
    }

    /// Master-variable mixing: Psi_pm = a_pm Phi + b_pm A.
    pub fn a_pm<T: Scalar>(&self, sign: Sign, r: T) -> T {
        let n = T::from_f64;
        match sign {
            // c_+ - Q/(2r) = -Q (m/(2c~) + 1/(2r))
            Sign::Plus => -n(self.q) * (n(self.m / (2.0 * self.c_tilde)) + n(0.5) / r),
            // c~/(6 mass) - 2Q^2/(3 mass r)
            Sign::Minus => {
                n(self.c_tilde / (6.0 * self.params.mass))
                    - n(2.0 * self.params.q2() / (3.0 * self.params.mass)) / r
            }
        }
    }

    pub fn b_pm(&self, sign: Sign) -> f64 {
        match sign {
            Sign::Plus => 1.0,
            Sign::Minus => self.b_minus,
        }
    }

    /// Constant determinant a_+ b_- - a_- b_+ of the (Phi, A) -> Psi_pm map
    /// (the r-dependent parts cancel identically).
    pub fn mixing_det(&self) -> f64 {
        let mass = self.params.mass;
        -(4.0 * self.params.q2() * self.m + self.c_tilde * self.c_tilde)
            / (6.0 * mass * self.c_tilde)
    }

    /// All printed polynomial coefficient functions at radius r.
    pub fn polys<T: Scalar>(&self, r: T) -> PolyValues<T> {
        let (x, y, z) = self.vars(r);
        let h = self.h_of(r);
        let mu = self.mu_of(r);
        let ch = self.c_hat(r);
        let m = self.m;
        let ct = self.c_tilde;
        let n = T::from_f64;
        let x2 = x * x;
        let x3 = x2 * x;
        let x4 = x3 * x;
        let z2 = z * z;
        let z3 = z2 * z;

        let p_x0 = (n(6.0) * (n(4.0) * z + n(m)) * x - n(64.0) * z2 - n(16.0 * m) * z) * y
            + n(27.0) * x3
            - n(24.0) * (n(5.0) * z - n(m)) * x2
            + (n(152.0) * z2 - n(2.0 * (35.0 * m - 12.0)) * z + n(3.0 * m * (3.0 * m + 2.0))) * x
            - n(64.0) * z3
            + n(48.0 * m) * z2
            - n(8.0 * m * (m - 2.0)) * z
            + n(2.0 * m * m * (m + 2.0));
        let p_x1 = n(2.0) * (n(4.0) * z + n(m)) * y + n(9.0) * x2
            - (n(16.0) * z - n(5.0 * m - 6.0)) * x
            + n(8.0) * z2
            - n(6.0 * m) * z
            - n(4.0 * m);
        let p_xa = -n(4.0) * (n(4.0) * z + n(m)) * y - n(18.0) * x2
            + n(4.0) * (n(8.0) * z - n(m - 6.0)) * x
            - n(16.0) * z2
            + n(4.0 * (m - 4.0)) * z
            + n(2.0 * m * (m + 6.0));
        let p_y0 = n(2.0)
            * (n(18.0) * x2 - n(3.0) * (n(28.0) * z - n(m)) * x + n(96.0) * z2 - n(8.0 * m) * z)
            * y
            + n(9.0) * x3
            - n(6.0) * (n(10.0) * z - n(m)) * x2
            + (n(120.0) * z2 - n(2.0 * (11.0 * m - 12.0)) * z + n(3.0 * m * (m + 2.0))) * x
            - n(64.0) * z3
            + n(16.0 * (m - 4.0)) * z2
            - n(8.0 * m * (m + 2.0)) * z;
        let p_y1 = n(2.0) * (n(6.0) * x - n(12.0) * z + n(m)) * y + n(3.0) * x2
            - (n(12.0) * z + n(m + 6.0)) * x
            + n(8.0) * z2
            + n(2.0 * (m + 8.0)) * z;
        let p_ya = -n(4.0) * (n(6.0) * x - n(12.0) * z + n(m)) * y - n(6.0) * x2
            + n(4.0) * (n(6.0) * z - n(m)) * x
            - n(16.0) * z2
            + n(4.0 * (m - 4.0)) * z
            - n(2.0 * m * (m + 2.0));
        let p_z = self.p_z(r);

        let p_x = (n(9.0) * x - n(36.0) * z + n(36.0) * y - n(18.0 + 3.0 * m)) * x
            - n(6.0) * (n(12.0) * z - n(m)) * y
            + n(6.0) * (n(4.0) * z + n(m + 8.0)) * z;
        let p_y = -n(3.0) * (n(9.0) * x - n(16.0) * z + n(5.0 * m - 6.0)) * x
            - n(6.0) * (n(4.0) * z + n(m)) * y
            - n(6.0) * (n(4.0) * z - n(3.0 * m)) * z
            + n(12.0 * m);
        let p_a = -n(8.0) * (n(ct) + n(m) * r) * z;

        let q_plus = n(12.0) * x2
            + (n(3.0) * (y - n(9.0) * z - n(3.0)) + n(5.0 * m) + n(2.0) * ch) * x
            + n(16.0) * z2
            - n(2.0) * z * (n(3.0 * m - 4.0) + ch)
            + n(2.0) * (n(m) + ch) * y
            - n(2.0) * (n(2.0 * m) + ch);
        // -16 a_+ mu Q / r = mu (8 m Q^2 / (c~ r) + 8 z)
        let q_minus = mu * (n(8.0 * m * self.params.q2() / ct) / r + n(8.0) * z)
            + (n(9.0) * x - n(16.0) * z + n(5.0 * m - 6.0)) * x
            + n(8.0) * z2
            + n(2.0) * (n(m) + n(4.0) * z) * y
            - n(6.0 * m) * z
            - n(4.0 * m);

        let p_xp = -n(8.0) * z * h * mu
            - n(3.0) * (n(9.0) * x - n(40.0) * z + n(8.0 * m)) * x2
            - n(3.0 * m) * (n(3.0 * m + 2.0) + n(2.0) * y) * x
            + n(2.0) * (n(35.0 * m - 12.0) - n(12.0) * y) * x * z
            + n(64.0) * z3
            - n(8.0) * z2 * (n(19.0) * x - n(8.0) * y + n(6.0 * m))
            + n(8.0 * m) * (n(2.0) * y + n(m - 2.0)) * z
            - n(2.0 * m * m * (m + 2.0))
            - (n(4.0) * z - n(ct) / r)
                * ((n(9.0) * x - n(16.0) * z + n(2.0 * m - 12.0)) * x
                    + n(2.0) * (n(m) + n(4.0) * z) * y
                    + n(2.0) * (n(4.0) * z - n(m - 4.0)) * z
                    - n(m * (m + 6.0)));
        let p_xm = n(81.0) * (n(4.0) * z - x) * x4
            - n(18.0) * x4 * (n(4.0 * m) + n(3.0) * ch)
            - n(3.0)
                * x3
                * (n(144.0) * z2 - n(2.0) * z * (n(36.0) * ch + n(23.0 * m))
                    + n(m) * (n(16.0) * ch + n(3.0 * (3.0 * m + 2.0)) + n(6.0) * y))
            - n(2.0)
                * x2
                * (-n(96.0) * z3 + n(8.0) * z2 * (n(18.0) * ch + n(m))
                    - n(2.0 * m) * z * (n(35.0) * ch + n(5.0 * m + 24.0))
                    + n(3.0 * m)
                        * (-n(8.0) * y * z
                            + n(m + 2.0) * (n(m) + n(3.0) * ch)
                            + n(2.0) * ch * (y - n(2.0))))
            - n(4.0 * m * m * (m + 2.0)) * ch * x
            - n(64.0) * x * z3 * (n(m) - n(2.0) * ch)
            - n(16.0 * m) * (n(6.0) * ch + n(4.0) * y - n(m - 4.0)) * x * z2
            + n(8.0 * m)
                * x
                * z
                * (n(m) * (n(3.0) * ch + n(m + 6.0)) + (n(4.0) * ch - n(2.0 * m)) * y);
        let p_yp = -n(9.0) * x3
            + n(6.0) * x2 * (n(3.0) * y + z + n(m + 3.0) - ch)
            + n(16.0 * m) * z2
            + n(4.0) * x * z * (-n(12.0) * y - n(6.0 * m) + ch)
            + x * (n(12.0) * (n(2.0 * m) + ch) * y + n(m * (7.0 * m + 12.0)) + n(12.0) * ch)
            - n(16.0) * z * ((n(3.0 * m) + n(2.0) * ch) * y - n(m + 1.0))
            + n(4.0 * m * m) * y
            + n(2.0 * (m + 2.0) * (m + 2.0)) * (-n(2.0) * z + n(m - 2.0) + ch)
            + n(16.0 * m) * z
            + n(8.0) * (n(m + 2.0) - ch);
        let p_ym = n(81.0) * x4
            + n(54.0) * x3 * (n(6.0) * y + n(4.0) * z + n(m + 1.0) + ch)
            + n(9.0)
                * x2
                * (n(16.0) * z2 - n(2.0) * z * (n(24.0) * x - n(m) + n(8.0) * ch) - n(6.0) * x
                    + n(24.0) * (ch - n(4.0) * z) * y
                    + n(m) * (n(6.0) * y + n(3.0 * m + 6.0) + n(4.0) * ch))
            + n(6.0)
                * x
                * (n(16.0) * z2 * (n(6.0) * y - n(3.0 * m) + ch)
                    + n(2.0)
                        * z
                        * (n(24.0) * (n(m) - n(2.0) * ch) * y + n(m) * (n(m - 12.0) - n(3.0) * ch))
                    + n(3.0 * m) * (n(2.0) * y + n(m + 2.0)) * ch)
            + n(8.0)
                * z
                * (n(24.0 * m) * z2
                    - n(6.0) * z * (n(4.0) * (n(3.0 * m) - n(2.0) * ch) * y + n(m * (m - 4.0)))
                    + n(3.0 * m * m) * (n(2.0) * y + n(m + 2.0) - ch)
                    - n(12.0 * m) * ch);

        PolyValues {
            p_x0,
            p_x1,
            p_xa,
            p_y0,
            p_y1,
            p_ya,
            p_z,
            p_x,
            p_y,
            p_a,
            p_x_plus: p_xp,
            p_x_minus: p_xm,
            p_y_plus: p_yp,
            p_y_minus: p_ym,
            q_plus,
            q_minus,
        }
    }
}

/// Values of the printed polynomial coefficient functions at one radius.
#[derive(Clone, Copy, Debug)]
pub struct PolyValues<T> {
    pub p_x0: T,
    pub p_x1: T,
    pub p_xa: T,
    pub p_y0: T,
    pub p_y1: T,
    pub p_ya: T,
    pub p_z: T,
    pub p_x: T,
    pub p_y: T,
    pub p_a: T,
    pub p_x_plus: T,
    pub p_x_minus: T,
    pub p_y_plus: T,
    pub p_y_minus: T,
    pub q_plus: T,
    pub q_minus: T,
}
