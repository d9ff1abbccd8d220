//! Generalized Tikhonov regularization for linear statistical inverse problems.
//!
//! The setting: recover an unknown signal `x` from `y = A x + eps`, where `A`
//! is a known linear forward operator and `eps` is centered noise. An affine
//! reconstructor `x_hat = W y + b` is scored by its expected squared error
//! under a prior on `x`, and the minimizer over all (W, b) depends on the
//! prior only through its mean and covariance. This crate provides
//!
//! * dense symmetric/PSD linear algebra with explicit failure modes
//!   ([`linalg`]),
//! * discretized signal models on the unit torus: priors, noise models,
//!   convolution operators, Haar transforms ([`model`]),
//! * the closed-form reconstructor, its exact expected risk, and the optimal
//!   regularizer for known moments ([`tikhonov`]),
//! * supervised and unsupervised estimation of the regularizer from samples
//!   ([`learn`]),
//! * Monte-Carlo sweeps measuring how fast the learned reconstructors'
//!   excess risk decays with the training-set size ([`experiment`]).
//!
//! Everything is deterministic given a master seed; the `parallel` feature
//! (on by default) distributes sweep cells over threads without changing any
//! result bit.

pub mod error;
pub mod experiment;
pub mod learn;
pub mod linalg;
pub mod model;
pub mod tikhonov;

pub use error::Error;

/// Shorthand for results carrying [`Error`].
pub type Result<T> = std::result::Result<T, Error>;

/// Mixes a list of integers into one 64-bit seed (splitmix64 steps over a
/// running state). Used to derive independent per-cell RNG streams from a
/// master seed; any change in any component changes the result completely.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut state: u64 = 0x9e3779b97f4a7c15;
    for &p in parts {
        state ^= p.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        state = z ^ (z >> 31);
    }
    state
}
