//! Security-aware semantic communication over an AWGN channel.
//!
//! A frozen image autoencoder (the semantic/channel encoder and decoder
//! pair) is extended with two pluggable residual modules: one at the
//! transmitter that adds a power-limited adversarial perturbation to fool
//! an eavesdropping classifier, and one at the legitimate receiver that
//! removes perturbation and channel noise before decoding.

pub mod adversary;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod rng;
pub mod secure;
pub mod semcom;

pub use error::{Error, Result};
