//! Shared fixtures for the benchmarks.

use lieforge::commutator::Factorizer;
use lieforge::net::{build_base_net, BuildOptions};
use lieforge::sampling::{random_algebra_in_ball, rng};
use lieforge::{AlgebraElement, Ball, GroupElement, GroupKind, Tuple, WordNet};

/// Seeded pair and a net around the identity with words up to `max_len`.
pub fn net(kind: GroupKind, max_len: usize) -> WordNet {
    let pair = Tuple::from_seed(kind, 7);
    let mut opts = BuildOptions::new(Ball::at_identity(kind, 1.0));
    opts.max_len = max_len;
    opts.target_delta = 0.01;
    opts.validation_samples = 1000;
    build_base_net(&pair, &opts).expect("seeded pair builds a net")
}

/// `count` seeded algebra elements of norm at most `radius`.
pub fn algebra_points(kind: GroupKind, count: usize, radius: f64, seed: u64) -> Vec<AlgebraElement> {
    let mut r = rng(seed);
    (0..count).map(|_| random_algebra_in_ball(kind, radius, &mut r)).collect()
}

pub fn group_points(kind: GroupKind, count: usize, radius: f64, seed: u64) -> Vec<GroupElement> {
    algebra_points(kind, count, radius, seed).iter().map(|x| x.exp()).collect()
}

pub fn factorizer(kind: GroupKind) -> Factorizer {
    Factorizer::weak(kind, 1).expect("registered group")
}
