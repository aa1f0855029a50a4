//! Spectral gaps, mixing times and comparison inequalities for reversal
//! shuffles on the n-cycle.
//!
//! The library implements the cyclic segment-reversal chains (uniform
//! lengths up to L, or geometric θ-weighted lengths), random transpositions,
//! and the block-average dynamics, together with:
//!
//! * exact Dirichlet forms, moments and Rayleigh quotients over the uniform
//!   measure by full enumeration ([`chains`]);
//! * the m-block coupling operator and its closed-form spectrum, the block
//!   conditional-expectation operator, and full-generator spectral gaps via
//!   dense eigensolves or matrix-free Lanczos ([`spectral`]);
//! * slow-mode test functions and numeric checkers for the block-dynamics
//!   comparison inequalities ([`bounds`]);
//! * trajectory simulation, autocorrelation-based relaxation-time estimates
//!   and exact total-variation mixing times via uniformization
//!   ([`montecarlo`]);
//! * ready-made verification suites used by the CLI and the acceptance
//!   tests ([`suites`]).

pub mod bounds;
pub mod chains;
pub mod error;
pub mod montecarlo;
pub mod perm;
pub mod spectral;
pub mod suites;
pub mod tableio;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::chains::ObservableTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// A centered standard-Gaussian table, for quick in-module tests.
    pub fn random_table(n: usize, rng: &mut ChaCha8Rng) -> ObservableTable {
        let values: Vec<f64> = (0..crate::perm::factorial(n))
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let mut t = ObservableTable::new(n, values).unwrap();
        t.center();
        t
    }
}
