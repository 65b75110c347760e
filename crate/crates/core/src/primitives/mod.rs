//! Reproducible primitive processes: renewal event streams (ordinary,
//! equilibrium-delayed or fixed-delay), Bernoulli routing sequences, and
//! centered-process arithmetic.

pub mod renewal;
pub mod rng;

pub use renewal::{
    center_counting, equilibrium_delay_sample, DelayMode, RenewalStream, RoutingSequence,
};
pub use rng::{derive_seed, stream_rng, tagged_rng, StreamRole};
