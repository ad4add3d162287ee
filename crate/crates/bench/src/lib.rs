//! Seeded inputs shared by the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specqd_core::{quantize_direct_cast, Layout, Matrix, MxfpTensor};

/// Weight shapes `(M, K)` of decoder-style linears at two model widths.
pub const WEIGHT_SHAPES: [(usize, usize); 3] = [(1024, 1024), (4096, 1024), (1024, 4096)];

/// Token counts: single-token decode and a verification batch of 8.
pub const TOKEN_COUNTS: [usize; 2] = [1, 8];

/// Uniform `[-1, 1)` matrix from a fixed seed.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0f32..1.0))
}

/// A float weight matrix and its K-blocked MXFP4 cast.
pub fn weights(m: usize, k: usize) -> (Matrix, MxfpTensor) {
    let w = random_matrix(m, k, 0x3e1f ^ (m * 31 + k) as u64);
    let q = quantize_direct_cast(&w)
        .expect("finite, block-aligned weights")
        .to_layout(Layout::KBlocked);
    (w, q)
}
