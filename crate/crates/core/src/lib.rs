//! Building blocks for randomized controlled trials: assignment designs
//! (independent coin flips, balanced allocation, permuted blocks, and the
//! Gram-Schmidt walk), treatment-effect estimators with and without network
//! interference, exact and Monte-Carlo variance machinery, statistical
//! verification checks, and a worst-case design LP.
//!
//! All randomness flows through seeded [`rand_chacha::ChaCha8Rng`] streams
//! (see [`rng`]), so every result is reproducible from a `u64` seed.

pub mod designs;
pub mod estimation;
pub mod interference;
pub mod numerics;
pub mod report;
pub mod rng;
pub mod verification;
pub mod worstcase;
