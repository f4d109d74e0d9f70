//! Synthetic matrix generators for tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;
use crate::scalar::Scalar;

/// Symmetric 0/1 adjacency of a stochastic block model with equally sized
/// communities, no self loops, deterministic per seed.
pub fn generate_sbm<T: Scalar>(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<CsrMatrix<T>> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::InvalidProbability(if p_out > p_in { p_out } else { p_in.max(p_out) }));
    }
    if blocks == 0 || n % blocks != 0 {
        return Err(Error::DimensionMismatch(format!(
            "n = {n} must be divisible by blocks = {blocks}"
        )));
    }
    let community_size = n / blocks;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if i / community_size == j / community_size { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                triples.push((i, j, T::one()));
                triples.push((j, i, T::one()));
            }
        }
    }
    Ok(CsrMatrix::from_triples(n, n, triples))
}

/// Random CSR with values uniform in `[0.5, 1.5)`; entry presence is an
/// independent Bernoulli per cell. Deterministic per seed.
pub fn random_csr<T: Scalar>(
    num_rows: usize,
    num_cols: usize,
    density: f64,
    seed: u64,
) -> CsrMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::new();
    for r in 0..num_rows {
        for c in 0..num_cols {
            if rng.gen::<f64>() < density {
                triples.push((r, c, T::from_f64_lossy(0.5 + rng.gen::<f64>())));
            }
        }
    }
    CsrMatrix::from_triples(num_rows, num_cols, triples)
}
