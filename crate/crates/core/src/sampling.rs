//! Seeded sampling helpers. Every random draw in the crate goes through a
//! `ChaCha8Rng` handed in by the caller.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::lie::{AlgebraElement, GroupElement, GroupKind};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly distributed unit algebra element.
pub fn random_direction(kind: GroupKind, rng: &mut SeededRng) -> AlgebraElement {
    let n = kind.spec().algebra_dim;
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return AlgebraElement::new(kind, v / norm);
        }
    }
}

/// Uniform sample of the coordinate ball of the given radius.
pub fn random_algebra_in_ball(kind: GroupKind, radius: f64, rng: &mut SeededRng) -> AlgebraElement {
    let n = kind.spec().algebra_dim as f64;
    let u: f64 = rng.random();
    random_direction(kind, rng).scale(radius * u.powf(1.0 / n))
}

/// `center * Exp(v)` with `v` uniform in the ball of the given radius.
pub fn random_element_in_ball(center: &GroupElement, radius: f64, rng: &mut SeededRng) -> GroupElement {
    center.mul(&random_algebra_in_ball(center.kind(), radius, rng).exp())
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Radical inverse of `i` in the given base.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Low-discrepancy points in the coordinate ball: a randomly shifted Halton sequence
/// on the cube, rejected to the ball.
pub fn halton_ball(kind: GroupKind, count: usize, radius: f64, seed: u64) -> Vec<AlgebraElement> {
    let n = kind.spec().algebra_dim;
    let mut r = rng(seed);
    let shift: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let v = DVector::from_fn(n, |d, _| {
            let u = (radical_inverse(i, PRIMES[d]) + shift[d]).fract();
            radius * (2.0 * u - 1.0)
        });
        i += 1;
        if v.norm() <= radius {
            out.push(AlgebraElement::new(kind, v));
        }
    }
    out
}
