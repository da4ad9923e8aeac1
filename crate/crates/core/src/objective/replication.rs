//! Dataset permutation and holdout split for one simulation replication.
//!
//! A replication permutes the sample indices with a seeded uniform stream,
//! takes the leading fraction as the training set and the rest as the
//! validation set. External workers reproduce exactly this procedure.

use super::ObjectiveError;

/// xorshift64* generator. Small and fully specified so other languages can
/// reproduce the permutation bit for bit.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        // zero is a fixed point of xorshift
        let state = if seed == 0 { 0x9e37_79b9_7f4a_7c15 } else { seed };
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    /// Uniform on (0, 1].
    pub fn next_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Sampling without replacement from a shrinking pool: each step draws
/// `u`, takes the `ceil(u * remaining)`-th (1-based) element of the pool and
/// removes it.
pub fn permute_with(m: usize, mut uniform: impl FnMut() -> f64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..m).collect();
    let mut out = Vec::with_capacity(m);
    while !pool.is_empty() {
        let remaining = pool.len();
        let l = ((uniform() * remaining as f64).ceil() as usize).clamp(1, remaining);
        out.push(pool.remove(l - 1));
    }
    out
}

pub fn permute_indices(m: usize, seed: u64) -> Vec<usize> {
    let mut rng = XorShift64Star::new(seed);
    permute_with(m, || rng.next_unit())
}

/// Splits a permutation into (train, validation): the first `floor(fraction * m)` entries train.
pub fn holdout_split(permutation: &[usize], train_fraction: f64) -> Result<(Vec<usize>, Vec<usize>), ObjectiveError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ObjectiveError::DegenerateSplit { m: permutation.len(), train_fraction });
    }
    let m = permutation.len();
    // tolerance absorbs products like 0.29 * 100 = 28.999999999999996
    let n_train = (train_fraction * m as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_train >= m {
        return Err(ObjectiveError::DegenerateSplit { m, train_fraction });
    }
    Ok((permutation[..n_train].to_vec(), permutation[n_train..].to_vec()))
}
