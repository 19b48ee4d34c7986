use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::DenseMatrix;

pub fn gaussian_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::new(rows, cols, gaussian_vec(rows * cols, seed ^ 0x9e37_79b9)).unwrap()
}

pub fn random_labels(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}
