//! Group-conditional modeling of a generator's latent space.
//!
//! Labeled latent codes are pushed through an MLP autoencoder trained with a
//! reconstruction term plus a lifted-structured contrastive term on the
//! bottleneck. A Gaussian mixture is fit per demographic group on bottleneck
//! codes; sampling a mixture and decoding yields latents for that group.

pub mod autoencoder;
pub mod cli;
pub mod contrastive;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod pipeline;
mod io_util;

pub use error::{Error, Result};
