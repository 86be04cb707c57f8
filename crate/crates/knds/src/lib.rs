//! Charged de Sitter black-hole numerics: background geometry and horizon
//! classification, master-equation perturbation potentials with their
//! positivity certificates, resonance (quasinormal-mode) counting by the
//! argument principle, subprincipal-symbol eigenvalue verification, and
//! spherically symmetric conformal-method initial data.

pub mod error;
pub mod initdata;
pub mod numeric;
pub mod perturbation;
pub mod resonance;
pub mod sampling;
pub mod spacetime;
pub mod subprincipal;
pub mod verify;

pub use error::{Error, Result};
