//! Seeded random draws of nondegenerate parameter tuples for property tests,
//! audits and scans.

use crate::spacetime::BlackHoleParams;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for reproducible scans.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draw a charged, nondegenerate, non-rotating parameter tuple at mass 1.
/// Lambda is placed strictly inside the admissible window so all horizon
/// machinery applies; charge is bounded away from 0 and from the extremal
/// bound so the full root ordering is strict.
pub fn sample_nondegenerate<R: Rng>(rng: &mut R) -> BlackHoleParams {
    let mass = 1.0;
    loop {
        let q: f64 = rng.gen_range(0.05..1.05);
        let d = 9.0 * mass * mass - 8.0 * q * q;
        if d <= 1e-3 {
            continue;
        }
        let sd = d.sqrt();
        let lower = (6.0 * (mass - sd) / (3.0 * mass - sd).powi(3)).max(0.0);
        let upper = 6.0 * (mass + sd) / (3.0 * mass + sd).powi(3);
        let t: f64 = rng.gen_range(0.08..0.92);
        let lambda = lower + t * (upper - lower);
        if lambda <= 0.0 {
            continue;
        }
        return BlackHoleParams::static_params(lambda, mass, q, 0.0).unwrap();
    }
}

/// A near-extremal charge draw: Q close to the discriminant bound, lambda in
/// the middle of its (narrow) admissible window.
pub fn sample_near_extremal<R: Rng>(rng: &mut R) -> BlackHoleParams {
    let mass = 1.0;
    let q_max = (9.0f64 / 8.0).sqrt() * mass;
    let q = q_max * rng.gen_range(0.97..0.99);
    let d = 9.0 * mass * mass - 8.0 * q * q;
    let sd = d.sqrt();
    let lower = (6.0 * (mass - sd) / (3.0 * mass - sd).powi(3)).max(0.0);
    let upper = 6.0 * (mass + sd) / (3.0 * mass + sd).powi(3);
    let lambda = lower + rng.gen_range(0.3..0.7) * (upper - lower);
    BlackHoleParams::static_params(lambda, mass, q, 0.0).unwrap()
}
