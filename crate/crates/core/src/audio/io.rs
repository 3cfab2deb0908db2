//! Audio decoding and the binary feature cache.

use super::MelFeatures;
use crate::error::{Error, IoContext, Result};
use ndarray::Array2;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Mono samples in `[-1, 1]` and their sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

/// Decodes a WAV or FLAC file, averaging channels to mono.
pub fn load_audio(path: &Path) -> Result<Waveform> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let wav = match ext.as_str() {
        "flac" => load_flac(path)?,
        _ => load_wav(path)?,
    };
    if wav.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    Ok(wav)
}

fn downmix(interleaved: Vec<f32>, channels: usize) -> Vec<f32> {
    if channels <= 1 {
        return interleaved;
    }
    interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / channels as f32)
        .collect()
}

fn load_wav(path: &Path) -> Result<Waveform> {
    let corrupt = |e: hound::Error| Error::CorruptAudio(format!("{}: {e}", path.display()));
    let reader = hound::WavReader::open(path).map_err(corrupt)?;
    let spec = reader.spec();
    let samples: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(corrupt)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()
                .map_err(corrupt)?
        }
    };
    Ok(Waveform {
        samples: downmix(samples, usize::from(spec.channels)),
        sample_rate: spec.sample_rate,
    })
}

fn load_flac(path: &Path) -> Result<Waveform> {
    let corrupt = |e: claxon::Error| Error::CorruptAudio(format!("{}: {e}", path.display()));
    let mut reader = claxon::FlacReader::open(path).map_err(corrupt)?;
    let info = reader.streaminfo();
    let scale = 1.0 / (1u64 << (info.bits_per_sample - 1)) as f32;
    let samples: Vec<f32> = reader
        .samples()
        .map(|s| s.map(|v| v as f32 * scale))
        .collect::<Result<_, _>>()
        .map_err(corrupt)?;
    Ok(Waveform {
        samples: downmix(samples, info.channels as usize),
        sample_rate: info.sample_rate,
    })
}

/// Writes 16-bit mono PCM.
pub fn write_wav(path: &Path, wav: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wav.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let map = |e: hound::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = hound::WavWriter::create(path, spec).map_err(map)?;
    for s in &wav.samples {
        let v = (s.clamp(-1.0, 1.0) * f32::from(i16::MAX)).round() as i16;
        w.write_sample(v).map_err(map)?;
    }
    w.finalize().map_err(map)
}

const CACHE_MAGIC: &[u8; 4] = b"LYMF";
const CACHE_VERSION: u32 = 1;

/// Feature cache layout (little endian): magic `LYMF`, version u32,
/// sample_rate u32, hop u32, n_mels u32, stack_factor u32, T u64, then
/// `T × n_mels·stack_factor` f32 values row-major.
pub fn write_feature_cache(path: &Path, features: &MelFeatures) -> Result<()> {
    let file = fs::File::create(path).io_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let ctx = || format!("writing {}", path.display());
    w.write_all(CACHE_MAGIC).io_context(ctx)?;
    for v in [
        CACHE_VERSION,
        features.sample_rate(),
        features.hop() as u32,
        features.n_mels() as u32,
        features.stack_factor() as u32,
    ] {
        w.write_all(&v.to_le_bytes()).io_context(ctx)?;
    }
    w.write_all(&(features.num_frames() as u64).to_le_bytes())
        .io_context(ctx)?;
    for v in features.frames().iter() {
        w.write_all(&v.to_le_bytes()).io_context(ctx)?;
    }
    w.flush().io_context(ctx)
}

pub fn read_feature_cache(path: &Path) -> Result<MelFeatures> {
    let file = fs::File::open(path).io_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != CACHE_MAGIC {
        return Err(bad("not a feature cache (bad magic)"));
    }
    let mut u32s = [0u32; 5];
    for v in &mut u32s {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
        *v = u32::from_le_bytes(b);
    }
    let [version, sample_rate, hop, n_mels, stack] = u32s;
    if version != CACHE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
    let t = u64::from_le_bytes(b) as usize;
    let width = (n_mels * stack) as usize;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)
        .io_context(|| format!("reading {}", path.display()))?;
    if raw.len() != t * width * 4 {
        return Err(bad("payload length does not match header"));
    }
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let frames = Array2::from_shape_vec((t, width), data).map_err(|e| bad(&e.to_string()))?;
    MelFeatures::new(frames, sample_rate, hop as usize, stack as usize)
}

/// Loads features from a cache file (`.lymf`) or decodes audio and computes
/// word-level log-mel features.
pub fn load_features(path: &Path) -> Result<MelFeatures> {
    let is_cache = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("lymf"));
    if is_cache {
        read_feature_cache(path)
    } else {
        let wav = load_audio(path)?;
        super::wav_to_mel(&wav.samples, wav.sample_rate)
    }
}
