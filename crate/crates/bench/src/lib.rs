//! Fixtures shared by the benchmarks.

use loadtl_core::series::{year_start, LoadSeries, TimeBase};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

/// A year of hourly load with every `gap_every`-th run of `gap_len` hours missing.
pub fn gappy_series(gap_every: usize, gap_len: usize) -> LoadSeries {
    let n = 24 * 365;
    let readings: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if i > 24 * 7 && i % gap_every < gap_len {
                None
            } else {
                Some(1000.0 + 200.0 * ((i % 24) as f64 / 24.0 * std::f64::consts::TAU).sin())
            }
        })
        .collect();
    LoadSeries::from_options("XX", "UTC", TimeBase::Local, year_start(2019).unwrap(), &readings).unwrap()
}
