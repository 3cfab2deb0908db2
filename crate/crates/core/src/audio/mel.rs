//! Short-time Fourier transform and mel filterbank.

use super::{resample, MelFeatures};
use crate::error::{Error, Result};
use crate::nn::reflect_index;
use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_FFT: usize = 1024;
pub const HOP: usize = 512;
pub const N_MELS: usize = 80;
/// Added to mel magnitudes before the natural log.
pub const LOG_OFFSET: f64 = 1e-5;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels + 2` band edges equally spaced on the mel scale over `[0, sr/2]`.
pub fn mel_band_edges(sample_rate: u32, n_mels: usize) -> Vec<f64> {
    let top = hz_to_mel(f64::from(sample_rate) / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular filters `[n_mels, n_fft/2 + 1]` with unit peak.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize) -> Array2<f64> {
    let edges = mel_band_edges(sample_rate, n_mels);
    let bins = n_fft / 2 + 1;
    let bin_hz = f64::from(sample_rate) / n_fft as f64;
    Array2::from_shape_fn((n_mels, bins), |(m, k)| {
        let f = k as f64 * bin_hz;
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let up = (f - lo) / (mid - lo);
        let down = (hi - f) / (hi - mid);
        up.min(down).max(0.0)
    })
}

/// Number of frames produced for `len` samples with centred frames.
pub fn frame_count(len: usize) -> usize {
    1 + len / HOP
}

/// Log-mel features of a mono waveform: Hann window 1024, hop 512, 80 mel
/// bins, centred frames with reflection padding, `ln(mel + 1e-5)`.
/// Input at another rate is resampled to 16 kHz first.
pub fn wav_to_mel(waveform: &[f32], sample_rate: u32) -> Result<MelFeatures> {
    wav_to_mel_with(waveform, sample_rate, None)
}

/// Like [`wav_to_mel`], optionally transforming each frame's linear magnitude
/// spectrum (`N_FFT / 2 + 1` bins) before the mel projection.
pub fn wav_to_mel_with(
    waveform: &[f32],
    sample_rate: u32,
    spectral: Option<&dyn Fn(&mut [f64])>,
) -> Result<MelFeatures> {
    if waveform.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if sample_rate == 0 {
        return Err(Error::CorruptAudio("sample rate is zero".into()));
    }
    let resampled;
    let samples: &[f32] = if sample_rate == SAMPLE_RATE {
        waveform
    } else {
        resampled = resample(waveform, sample_rate, SAMPLE_RATE);
        &resampled
    };
    let n = samples.len();
    let pad = N_FFT / 2;
    let padded: Vec<f64> = (0..n + 2 * pad)
        .map(|i| {
            let src = i as isize - pad as isize;
            let idx = if src < 0 {
                reflect_index((-src) as usize, n)
            } else {
                reflect_index(src as usize, n)
            };
            f64::from(samples[idx])
        })
        .collect();

    let window: Vec<f64> = (0..N_FFT)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / N_FFT as f64).cos())
        .collect();
    let filters = mel_filterbank(SAMPLE_RATE, N_FFT, N_MELS);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(N_FFT);
    let t = frame_count(n);
    let bins = N_FFT / 2 + 1;
    let mut out = Array2::<f32>::zeros((t, N_MELS));
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut mag = vec![0.0; bins];
    for frame in 0..t {
        let start = frame * HOP;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (m, b) in mag.iter_mut().zip(&buf) {
            *m = b.norm();
        }
        if let Some(f) = spectral {
            f(&mut mag);
        }
        for (mel, filt) in filters.rows().into_iter().enumerate() {
            let energy: f64 = filt.iter().zip(&mag).map(|(w, m)| w * m).sum();
            out[[frame, mel]] = (energy + LOG_OFFSET).ln() as f32;
        }
    }
    MelFeatures::new(out, SAMPLE_RATE, HOP, 1)
}
