//! Synthetic workloads shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecfuse::MultiModalDataset;

/// `classes` Gaussian-ish blobs of `per_class` samples, `m` and `p` features.
pub fn blobs(seed: u64, classes: usize, per_class: usize, m: usize, p: usize) -> MultiModalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / per_class).collect();
    let cx = DMatrix::from_fn(classes, m, |_, _| rng.random_range(-3.0..3.0));
    let cy = DMatrix::from_fn(classes, p, |_, _| rng.random_range(-3.0..3.0));
    let x = DMatrix::from_fn(n, m, |i, j| cx[(labels[i], j)] + rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(n, p, |i, j| cy[(labels[i], j)] + rng.random_range(-1.0..1.0));
    MultiModalDataset::from_parts(x, y, &labels).expect("valid synthetic data")
}
