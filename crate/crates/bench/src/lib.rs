//! Seeded workloads shared by the benchmarks.

use capanneal_core::synthetic::blobs;
use capanneal_core::{ClusterState, Dataset, Eta};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `n` planar points around `k` centres and `k` starting locations at the
/// data mean, slightly spread.
pub fn workload(n: usize, k: usize, seed: u64) -> (Dataset, ClusterState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = Dataset::from_rows(&blobs(n, k, 0.05, &mut rng), None).expect("finite points");
    let mean = ds.weighted_mean();
    let locations = Array2::from_shape_fn((k, ds.dim()), |(j, c)| mean[c] + 1e-3 * j as f64);
    (ds, ClusterState::new(locations, Eta::Uniform, 1.0))
}
