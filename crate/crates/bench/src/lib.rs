//! Fixtures shared by the benchmarks.

use nonlinspin::{trial_rng, DenseDistribution, InteractionMatrix, Result};
use rand::Rng;

/// Random couplings at the given Dobrushin norm.
pub fn couplings(n: usize, norm: f64, seed: u64) -> Result<InteractionMatrix> {
    InteractionMatrix::random(n, norm, &mut trial_rng(seed, 0))
}

/// A strictly positive random law on n spins.
pub fn random_law(n: usize, seed: u64) -> Result<DenseDistribution> {
    let mut r = trial_rng(seed, 1);
    DenseDistribution::from_weights(
        n,
        (0..1usize << n)
            .map(|_| r.random_range(0.1..=1.0))
            .collect(),
    )
}
