//! Dead-neuron lesion experiments on small dense and spiking networks.
//!
//! The crate trains dense feedforward networks with SGD or Adam and
//! leaky-integrate-and-fire spiking networks with surrogate gradients or
//! pair-based plasticity, kills one hidden neuron partway through training,
//! and measures how the loss and the surviving neurons respond.

pub mod activations;
pub mod data;
pub mod error;
pub mod experiment;
pub mod lesion;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod snn;

pub use error::{Error, Result};
