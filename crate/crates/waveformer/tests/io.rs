use std::path::Path;

use waveformer::core::checkpoint::random_init;
use waveformer::core::rng::SplitMix64;
use waveformer::core::{AudioBuffer, ModelConfig};
use waveformer::files::{apply_geometry_override, load_config};
use waveformer::wav::to_pcm16;
use waveformer::{compact_config, load_checkpoint, read_wav, save_checkpoint, write_wav, BitDepth, Error};

fn signal(seed: u64, n: usize) -> Vec<f32> {
    let mut r = SplitMix64::new(seed);
    (0..n).map(|_| r.uniform(1.0)).collect()
}

fn write_raw(path: &Path, spec: hound::WavSpec, samples: &[i32]) {
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

fn pcm_spec(channels: u16, bits: u16) -> hound::WavSpec {
    hound::WavSpec { channels, sample_rate: 16_000, bits_per_sample: bits, sample_format: hound::SampleFormat::Int }
}

#[test]
fn float_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.wav");
    let mut x = signal(1, 5000);
    x.extend([0.0, -0.0, 1.0, -1.0, 1.5, f32::MIN_POSITIVE, 1e-30]);
    write_wav(&path, &AudioBuffer::new(x.clone(), 44_100).unwrap(), BitDepth::Float32).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate(), 44_100);
    let bits = |v: &[f32]| v.iter().map(|s| s.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.samples()), bits(&x));
}

#[test]
fn pcm16_decodes_as_quotient() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.wav");
    write_raw(&path, pcm_spec(1, 16), &[16384, -32768, 32767, 0, -1]);
    let a = read_wav(&path).unwrap();
    assert_eq!(a.samples(), &[0.5, -1.0, 32767.0 / 32768.0, 0.0, -1.0 / 32768.0]);
}

#[test]
fn pcm16_round_trip_error_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.wav");
    let mut x = signal(2, 4000);
    x.extend([1.0, -1.0, 0.99999, 0.5 / 32768.0, -0.5 / 32768.0]);
    write_wav(&path, &AudioBuffer::new(x.clone(), 8000).unwrap(), BitDepth::Pcm16).unwrap();
    let back = read_wav(&path).unwrap();
    let worst = x.iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(worst <= 1.0 / 32768.0, "{worst}");
}

#[test]
fn pcm16_quantizer_rounds_half_away_and_clamps() {
    assert_eq!(to_pcm16(0.5 / 32768.0), 1);
    assert_eq!(to_pcm16(-0.5 / 32768.0), -1);
    assert_eq!(to_pcm16(1.0), 32767);
    assert_eq!(to_pcm16(-1.0), -32768);
    assert_eq!(to_pcm16(-3.0), -32768);
}

#[test]
fn stereo_and_unsupported_encodings_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let stereo = dir.path().join("s.wav");
    write_raw(&stereo, pcm_spec(2, 16), &[1, 2, 3, 4]);
    let err = read_wav(&stereo).unwrap_err();
    assert_eq!(err.code(), "format");
    assert!(err.to_string().contains("mono required"), "{err}");

    let deep = dir.path().join("d.wav");
    write_raw(&deep, pcm_spec(1, 24), &[1, 2, 3]);
    assert_eq!(read_wav(&deep).unwrap_err().code(), "format");
}

#[test]
fn truncated_wav_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.wav");
    write_wav(&path, &AudioBuffer::new(signal(3, 1000), 16_000).unwrap(), BitDepth::Pcm16).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 101]).unwrap();
    let err = read_wav(&path).unwrap_err();
    assert_eq!(err.code(), "format", "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn missing_file_is_io_error() {
    let err = read_wav("/nonexistent/x.wav").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 2);
    assert!(err.report_line().starts_with("error: io: "));
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.wvfm");
    let set = random_init(&compact_config(), 5).unwrap();
    save_checkpoint(&set, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), set);
    assert_eq!(std::fs::read(&path).unwrap(), set.to_bytes());
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.wvfm");
    let mut bytes = random_init(&compact_config(), 5).unwrap().to_bytes();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert_eq!((err.code(), err.exit_code()), ("format", 1));
}

#[test]
fn config_override_allows_only_k() {
    let dir = tempfile::tempdir().unwrap();
    let base = compact_config();
    let ok = dir.path().join("k.cfg");
    std::fs::write(&ok, "# longer chunks\nK = 20\nE = 64\n").unwrap();
    assert_eq!(apply_geometry_override(&base, &ok).unwrap(), ModelConfig { chunk_frames: 20, ..base });

    let bad = dir.path().join("e.cfg");
    std::fs::write(&bad, "E = 128\nD = 64\n").unwrap();
    let err = apply_geometry_override(&base, &bad).unwrap_err();
    assert_eq!(err.code(), "format");
    assert!(err.to_string().contains("only K"), "{err}");

    let full = dir.path().join("full.cfg");
    std::fs::write(&full, base.to_kv_text()).unwrap();
    assert_eq!(load_config(&full).unwrap(), base);
}
