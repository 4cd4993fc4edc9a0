//! Streaming target sound extraction engine.
//!
//! A stride-`L` convolutional front end maps raw audio to latent frames, a
//! stack of dilated causal convolutions builds a contextful encoding of each
//! chunk, and a query-conditioned transformer decoder layer turns that encoding
//! into a multiplicative latent mask. Masked latents are synthesized back to
//! audio by an overlap-add transposed convolution.
//!
//! This crate is `no_std` (it needs `alloc`) and does no IO. File formats,
//! benchmarking and the command line live in the `waveformer` crate.

#![no_std]

extern crate alloc;

pub mod audio;
pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoder;
mod error;
pub mod gemm;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod stream;
pub mod tensor;

pub use audio::AudioBuffer;
pub use checkpoint::NamedTensorSet;
pub use config::{ChunkGeometry, ModelConfig};
pub use error::{Error, Result};
pub use model::Model;
pub use decoder::QueryVector;
pub use stream::{offline_forward, StreamSession};
pub use tensor::{ConvSpec, MacTally, Tensor, Tensor2};
