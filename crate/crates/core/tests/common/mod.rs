#![allow(dead_code)]

use kacanov::{FeFunction, FeSpace, TriangleMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn space(level: u32) -> FeSpace {
    FeSpace::new(TriangleMesh::build_lshape(level).unwrap())
}

/// Free nodal values drawn uniformly from `[-scale, scale]`.
pub fn random_function(space: &FeSpace, rng: &mut ChaCha8Rng, scale: f64) -> FeFunction {
    let values = (0..space.n_free()).map(|_| rng.gen_range(-scale..=scale)).collect();
    FeFunction::from_values(space.tag(), values).unwrap()
}

pub fn rel_err(value: f64, oracle: f64) -> f64 {
    (value - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE)
}
