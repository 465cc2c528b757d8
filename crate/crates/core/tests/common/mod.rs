#![allow(dead_code)]

use mfgen_core::measures::{DataPoint, Grid, GridDensity};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use std::sync::Arc;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// Positive density on `grid` built from a random Gaussian bump plus a floor.
pub fn random_density(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> GridDensity {
    let d = grid.dim();
    let c: Vec<f64> = (0..d).map(|_| range(rng, -1.0, 1.0)).collect();
    let s = range(rng, 0.4, 1.2);
    let vals = (0..grid.len())
        .map(|i| {
            let t = grid.node(i);
            let r2: f64 = t.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / (2.0 * s * s)).exp() + 1e-3
        })
        .collect();
    GridDensity::normalized(grid.clone(), vals).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, features: usize) -> DataPoint {
    let x = (0..features).map(|_| range(rng, -2.0, 2.0)).collect();
    DataPoint::new(x, range(rng, -1.0, 1.0)).unwrap()
}
