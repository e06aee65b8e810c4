//! Approximate counting of 0/1 knapsack solutions.
//!
//! The main estimator builds a tree of approximate samplers over weight
//! classes, draws partial solutions at a relaxed capacity and corrects for
//! tiny items in a second pass. Dyer's rounding estimator and exact
//! counters are included for comparison.

#[cfg(feature = "cli")]
pub mod cli;
pub mod clock;
pub mod convolution;
pub mod dyer;
pub mod estimator;
pub mod instance;
pub mod ntt;
pub mod numtheory;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod sampler;
pub mod secondphase;
pub mod verify;
pub mod xfloat;

pub use instance::{AlgoParams, KnapsackInstance};
pub use xfloat::XReal;
