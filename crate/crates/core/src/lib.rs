//! Bernoulli Young towers: induced schemes, tower coding, disintegrations,
//! geometric tail decompositions and the iid coupling they produce.

pub mod disintegration;
pub mod error;
pub mod geometric;
pub mod iid_sampler;
pub mod map_models;
pub mod tower_coding;
pub mod rational;
pub mod rng;
pub mod statistics;

pub use error::{Error, Result};
pub use rational::{Rational, Scalar};
