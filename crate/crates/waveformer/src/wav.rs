//! Mono WAV reading and writing.
//!
//! Reads 16-bit PCM (decoded as `s / 32768`) and 32-bit IEEE float. Writes
//! either; 16-bit output rounds half away from zero and clamps.

use std::io::ErrorKind;
use std::path::Path;

use hound::{SampleFormat, WavSpec};
use waveformer_core::AudioBuffer;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == ErrorKind::UnexpectedEof => {
            Error::format(path, "truncated file")
        }
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(msg) => Error::format(path, msg),
        hound::Error::Unsupported => Error::format(path, "unsupported encoding"),
        other => Error::format(path, other.to_string()),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(path, format!("mono required, file has {} channels", spec.channels)));
    }
    let expected = reader.len() as usize;
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::format(
                path,
                format!("unsupported encoding: {bits}-bit {fmt:?}; need 16-bit PCM or 32-bit float"),
            ))
        }
    }
    .map_err(|e| match e {
        // The header was read, so a short read here means the data chunk is cut off.
        hound::Error::IoError(_) => Error::format(path, "truncated file"),
        other => map_hound(path, other),
    })?;
    if samples.len() != expected {
        return Err(Error::format(path, "truncated file"));
    }
    AudioBuffer::new(samples, spec.sample_rate).map_err(|e| Error::format(path, e.to_string()))
}

/// Converts one sample to 16-bit PCM: scale by 32768, round half away from
/// zero, clamp to the representable range.
pub fn to_pcm16(x: f32) -> i16 {
    (x as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (bits, format) = match depth {
        BitDepth::Pcm16 => (16, SampleFormat::Int),
        BitDepth::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec { channels: 1, sample_rate: audio.sample_rate(), bits_per_sample: bits, sample_format: format };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in audio.samples() {
        match depth {
            BitDepth::Pcm16 => writer.write_sample(to_pcm16(s)),
            BitDepth::Float32 => writer.write_sample(s),
        }
        .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}
