//! Host-side companion to `waveformer-core`: WAV and checkpoint files,
//! the RTF benchmark, the verify probe suite and the command line.

pub mod bench;
pub mod error;
pub mod files;
pub mod probes;
pub mod wav;

pub use bench::{bench_rtf, BenchReport};
pub use error::{Error, Result};
pub use files::{load_checkpoint, save_checkpoint};
pub use wav::{read_wav, write_wav, BitDepth};
pub use waveformer_core as core;

use waveformer_core::ModelConfig;

/// The reduced-width model used when no checkpoint is given: default
/// geometry (L, K, M, P, N_c, F_s) with E=64, D=32, 4 heads.
pub fn compact_config() -> ModelConfig {
    ModelConfig { enc_dim: 64, dec_dim: 32, heads: 4, ffn_dim: 128, embed_hidden: 64, ..ModelConfig::default() }
}
