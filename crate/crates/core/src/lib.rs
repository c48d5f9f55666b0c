//! Heralded tripartite entanglement between atomic ensembles, simulated in a
//! truncated Fock space, together with the GHZ and W nonlocality tests built on it.
pub mod belltest;
pub mod error;
pub mod fock;
pub mod optics;
pub mod protocols;
pub mod rng;
pub mod sampling;
pub use error::{Error, Result};
