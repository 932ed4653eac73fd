//! Temporal convolutional network for 15-class network intrusion detection,
//! together with the data preparation pipeline, training loop and
//! classification reports around it.

pub mod cli;
pub mod error;
pub mod eval;
pub mod nn;
pub mod numerics;
pub mod optim;
pub mod pipeline;

pub use error::{Error, Result};
