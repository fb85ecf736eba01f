// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared fixtures for the benchmarks.

use steerbench_core::runtime::{init_random, ModelConfig};
use steerbench_core::{Model, Rng, Tensor};

pub fn reference_model() -> Model {
    init_random(&ModelConfig::reference(), 0).expect("reference config is valid")
}

/// ASCII text of exactly `len` bytes.
pub fn prompt(len: usize) -> String {
    "The quick brown fox jumps over the lazy dog. ".chars().cycle().take(len).collect()
}

pub fn random_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| (rng.next_f64(), rng.next_f64())).collect()
}

/// Row-stochastic causal attention, `[heads, n, n]`.
pub fn random_attention(heads: usize, n: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(heads * n * n);
    for _ in 0..heads {
        for q in 0..n {
            let row: Vec<f64> = (0..n).map(|k| if k <= q { rng.normal().exp() } else { 0.0 }).collect();
            let z: f64 = row.iter().sum();
            data.extend(row.iter().map(|x| (x / z) as f32));
        }
    }
    Tensor::new(vec![heads, n, n], data).expect("shape matches data")
}
