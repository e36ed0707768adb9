use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, TensorError};

/// Glorot/Xavier uniform initialization on `[-a, a]`, `a = sqrt(6 / (rows + cols))`.
pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> Result<Matrix, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_init_with(rows, cols, &mut rng)
}

pub fn xavier_init_with<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<Matrix, TensorError> {
    if rows == 0 || cols == 0 {
        return Err(TensorError::ZeroDimension { rows, cols });
    }
    let bound = xavier_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}
