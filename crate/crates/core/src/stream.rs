//! Chunk-by-chunk extraction sessions and the one-pass reference path.
//!
//! With `S = K * L` samples per chunk, latent frame `n` is computed from raw
//! samples `[n*L - L, n*L + 2L)` (zeros before the stream start), and its
//! synthesized contribution lands on output samples `[n*L, n*L + 3L)`. Chunk
//! `k` therefore finalizes output samples `[k*S, (k+1)*S)` and leaves a `2L`
//! sample overlap-add tail for the next chunk. A chunk is emitted once
//! `(k+1)*S + 2L` input samples have arrived, so the first output appears after
//! `S + 2L` samples.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::checkpoint::NamedTensorSet;
use crate::decoder::{
    decode_chunk, decode_with_previous, embed_query, embed_query_tallied, DecoderCache,
    QueryEmbedding, QueryVector,
};
use crate::encoder::{encode_chunk, encode_sequence, EncoderState};
use crate::error::{Error, Result};
use crate::kernels::{
    conv1d, conv1d_tallied, conv_transpose1d, mul, overlap_add, relu_in_place,
};
use crate::model::Model;
use crate::tensor::{MacTally, Tensor2};

/// One logical stream: buffered input, encoder contexts, decoder cache and
/// the pending synthesis tail. Step it from one thread at a time; the model
/// itself is shared read-only.
#[derive(Debug, Clone)]
pub struct StreamSession {
    model: Arc<Model>,
    embedding: QueryEmbedding,
    /// Raw input from sample `k*S - L` onward, `k` being the next chunk.
    pending: Vec<f32>,
    encoder: EncoderState,
    decoder: DecoderCache,
    /// Bias-free synthesis carried into the next chunk, `2L` samples.
    tail: Vec<f64>,
    chunks_processed: u64,
    ingested: u64,
    emitted: u64,
    flushed: bool,
    tally: MacTally,
    embed_macs: u64,
}

impl StreamSession {
    pub fn new(model: Arc<Model>, query: &QueryVector) -> Result<Self> {
        let cfg = *model.config();
        let mut embed_tally = MacTally::new();
        let embedding = embed_query_tallied(query, &model.decoder.embed, &mut embed_tally)?;
        Ok(Self {
            embedding,
            pending: vec![0.0; cfg.stride],
            encoder: EncoderState::new(&model.encoder),
            decoder: DecoderCache::zeros(cfg.dec_dim, cfg.chunk_frames),
            tail: vec![0.0; cfg.lookahead_samples()],
            chunks_processed: 0,
            ingested: 0,
            emitted: 0,
            flushed: false,
            tally: MacTally::new(),
            embed_macs: embed_tally.get(),
            model,
        })
    }

    /// Validates `weights`, binds them and opens a session.
    pub fn from_tensors(weights: &NamedTensorSet, query: &QueryVector) -> Result<Self> {
        Self::new(Arc::new(Model::from_tensors(weights)?), query)
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn query_embedding(&self) -> &QueryEmbedding {
        &self.embedding
    }

    pub fn chunks_processed(&self) -> u64 {
        self.chunks_processed
    }

    pub fn samples_ingested(&self) -> u64 {
        self.ingested
    }

    pub fn samples_emitted(&self) -> u64 {
        self.emitted
    }

    /// Multiply-accumulates executed by all chunk processing so far.
    pub fn macs(&self) -> u64 {
        self.tally.get()
    }

    /// Multiply-accumulates spent embedding the query at construction.
    pub fn embedding_macs(&self) -> u64 {
        self.embed_macs
    }

    pub fn encoder_state(&self) -> &EncoderState {
        &self.encoder
    }

    /// Buffers `samples` and returns every chunk that became complete.
    pub fn push_samples(&mut self, samples: &[f32]) -> Result<Vec<f32>> {
        if self.flushed {
            return Err(Error::invalid("session already flushed"));
        }
        self.pending.extend_from_slice(samples);
        self.ingested += samples.len() as u64;
        let cfg = *self.model.config();
        let s = cfg.samples_per_chunk() as u64;
        let lookahead = cfg.lookahead_samples() as u64;
        let mut out = Vec::new();
        while self.ingested >= (self.chunks_processed + 1) * s + lookahead {
            let chunk = self.process_chunk()?;
            self.emitted += chunk.len() as u64;
            out.extend_from_slice(&chunk);
        }
        Ok(out)
    }

    /// [`push_samples`](Self::push_samples) for a buffer carrying its rate.
    pub fn push(&mut self, buffer: &AudioBuffer) -> Result<AudioBuffer> {
        let rate = self.model.config().sample_rate;
        if buffer.sample_rate() as usize != rate {
            return Err(Error::invalid(alloc::format!(
                "sample rate {} Hz does not match model rate {rate} Hz",
                buffer.sample_rate()
            )));
        }
        AudioBuffer::new(self.push_samples(buffer.samples())?, buffer.sample_rate())
    }

    /// Ends the stream: the remaining input is zero-padded, processed, and
    /// output truncated so that total output length equals total input length.
    pub fn flush(&mut self) -> Result<Vec<f32>> {
        if self.flushed {
            return Ok(Vec::new());
        }
        self.flushed = true;
        let window = self.model.config().samples_per_chunk() + self.model.config().lookahead_samples();
        let mut out = Vec::new();
        while self.emitted < self.ingested {
            if self.pending.len() < window {
                self.pending.resize(window, 0.0);
            }
            let chunk = self.process_chunk()?;
            let take = chunk.len().min((self.ingested - self.emitted) as usize);
            out.extend_from_slice(&chunk[..take]);
            self.emitted += take as u64;
        }
        Ok(out)
    }

    fn process_chunk(&mut self) -> Result<Vec<f32>> {
        let model = Arc::clone(&self.model);
        let cfg = model.config();
        let s = cfg.samples_per_chunk();
        let window = s + cfg.lookahead_samples();
        let tally = &mut self.tally;

        let x = Tensor2::from_vec(1, window, self.pending[..window].to_vec())?;
        let fe = &model.front_end;
        let mut y = conv1d_tallied(&x, &fe.weight, &fe.bias, &model.front_end_spec(), 0, 0, tally)?;
        relu_in_place(&mut y);

        let e = encode_chunk(&y, &mut self.encoder, &model.encoder, tally)?;
        let m = decode_chunk(&e, &mut self.decoder, &self.embedding, &model.decoder, tally)?;
        let masked = mul(&y, &m)?;
        let mut acc = overlap_add(&masked, &model.synthesis.weight, &model.synthesis_spec(), tally)?;
        debug_assert_eq!(acc.len(), window);

        for (a, t) in acc.iter_mut().zip(&self.tail) {
            *a += t;
        }
        let bias = model.synthesis.bias[0] as f64;
        let out = acc[..s].iter().map(|&v| (v + bias) as f32).collect();
        self.tail.copy_from_slice(&acc[s..]);

        let drain = s.min(self.pending.len());
        self.pending.drain(..drain);
        self.chunks_processed += 1;
        Ok(out)
    }
}

/// One-pass causal reference over a whole signal.
///
/// The front end and encoder run over the full sequence, the decoder runs per
/// chunk from the true previous encoding, and synthesis is a single transposed
/// convolution. Output length equals input length.
pub fn offline_forward(model: &Model, signal: &[f32], query: &QueryVector) -> Result<Vec<f32>> {
    if signal.is_empty() {
        return Ok(Vec::new());
    }
    let cfg = model.config();
    let s = cfg.samples_per_chunk();
    let k = cfg.chunk_frames;
    let chunks = signal.len().div_ceil(s);

    let mut padded = signal.to_vec();
    padded.resize(chunks * s + cfg.stride, 0.0);
    let x = Tensor2::from_vec(1, padded.len(), padded)?;
    let mut y = conv1d(&x, &model.front_end.weight, &model.front_end.bias, &model.front_end_spec(), cfg.stride, 0)?;
    relu_in_place(&mut y);
    debug_assert_eq!(y.cols(), chunks * k);

    let e = encode_sequence(&y, &model.encoder)?;
    let l = embed_query(query, &model.decoder.embed)?;
    let mut mask: Option<Tensor2> = None;
    for c in 0..chunks {
        let cur = e.slice_cols(c * k, (c + 1) * k);
        let prev = (c > 0).then(|| e.slice_cols((c - 1) * k, c * k));
        let m = decode_with_previous(&cur, prev.as_ref(), &l, &model.decoder)?;
        mask = Some(match mask {
            None => m,
            Some(acc) => acc.concat_cols(&m)?,
        });
    }
    let mask = mask.expect("at least one chunk");
    let masked = mul(&y, &mask)?;
    let out = conv_transpose1d(&masked, &model.synthesis.weight, &model.synthesis.bias, &model.synthesis_spec())?;
    let mut samples = out.into_vec();
    samples.truncate(signal.len());
    Ok(samples)
}
