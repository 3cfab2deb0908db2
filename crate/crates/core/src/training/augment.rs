//! Training-time input transforms: additive Gaussian noise, pitch shift,
//! polarity inversion, band-pass filtering and gain. All are time-preserving,
//! so targets never change.
//!
//! Waveform sources get the real transforms before the mel projection (pitch
//! shift scales the frequency axis of each STFT magnitude frame). Feature-only
//! sources get magnitude-domain analogues on the mel bands.

use crate::audio::{mel_band_edges, mel_filterbank, MelFeatures, LOG_OFFSET, N_FFT, N_MELS};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Augmentation {
    AddGaussianNoise {
        min_amplitude: f64,
        max_amplitude: f64,
        p: f64,
    },
    PitchShift {
        min_semitones: f64,
        max_semitones: f64,
        p: f64,
    },
    PolarityInversion {
        p: f64,
    },
    BandPassFilter {
        min_center_hz: f64,
        max_center_hz: f64,
        /// Bandwidth as a fraction of the centre frequency.
        min_bandwidth_fraction: f64,
        max_bandwidth_fraction: f64,
        p: f64,
    },
    Gain {
        min_gain_db: f64,
        max_gain_db: f64,
        p: f64,
    },
}

impl Augmentation {
    /// The five stock transforms with moderate ranges.
    pub fn stock() -> Vec<Self> {
        vec![
            Self::AddGaussianNoise {
                min_amplitude: 0.001,
                max_amplitude: 0.015,
                p: 0.5,
            },
            Self::PitchShift {
                min_semitones: -2.0,
                max_semitones: 2.0,
                p: 0.5,
            },
            Self::PolarityInversion { p: 0.5 },
            Self::BandPassFilter {
                min_center_hz: 200.0,
                max_center_hz: 4000.0,
                min_bandwidth_fraction: 0.5,
                max_bandwidth_fraction: 1.99,
                p: 0.5,
            },
            Self::Gain {
                min_gain_db: -12.0,
                max_gain_db: 12.0,
                p: 0.5,
            },
        ]
    }

    fn probability(&self) -> f64 {
        match self {
            Self::AddGaussianNoise { p, .. }
            | Self::PitchShift { p, .. }
            | Self::PolarityInversion { p }
            | Self::BandPassFilter { p, .. }
            | Self::Gain { p, .. } => *p,
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> Option<Applied> {
        if !rng.gen_bool(self.probability().clamp(0.0, 1.0)) {
            return None;
        }
        let mut between = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        Some(match *self {
            Self::AddGaussianNoise {
                min_amplitude,
                max_amplitude,
                ..
            } => Applied::Noise(between(min_amplitude, max_amplitude)),
            Self::PitchShift {
                min_semitones,
                max_semitones,
                ..
            } => Applied::Pitch(2f64.powf(between(min_semitones, max_semitones) / 12.0)),
            Self::PolarityInversion { .. } => Applied::Polarity,
            Self::BandPassFilter {
                min_center_hz,
                max_center_hz,
                min_bandwidth_fraction,
                max_bandwidth_fraction,
                ..
            } => {
                let center = between(min_center_hz, max_center_hz);
                let frac = between(min_bandwidth_fraction, max_bandwidth_fraction);
                Applied::BandPass { center, q: 1.0 / frac }
            }
            Self::Gain {
                min_gain_db,
                max_gain_db,
                ..
            } => Applied::Gain(10f64.powf(between(min_gain_db, max_gain_db) / 20.0)),
        })
    }
}

#[derive(Clone, Copy, Debug)]
enum Applied {
    Noise(f64),
    Pitch(f64),
    Polarity,
    BandPass { center: f64, q: f64 },
    Gain(f64),
}

/// Frequency-scaling of a magnitude spectrum by `ratio` (linear interpolation).
pub fn scale_spectrum(mag: &mut [f64], ratio: f64) {
    let src = mag.to_vec();
    let n = src.len();
    for (k, m) in mag.iter_mut().enumerate() {
        let pos = k as f64 / ratio;
        let i = pos.floor() as usize;
        *m = if i + 1 < n {
            let f = pos - i as f64;
            src[i] * (1.0 - f) + src[i + 1] * f
        } else if i < n {
            src[i]
        } else {
            0.0
        };
    }
}

/// RBJ band-pass biquad coefficients `(b0, b2, a1, a2)` normalised by `a0`
/// (with `b1 = 0`, `b2 = -b0`).
fn bandpass_coefficients(center: f64, q: f64, sample_rate: f64) -> (f64, f64, f64) {
    let w0 = 2.0 * std::f64::consts::PI * (center / sample_rate).min(0.49);
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    (alpha / a0, -2.0 * w0.cos() / a0, (1.0 - alpha) / a0)
}

/// Magnitude response of the band-pass filter at `hz`.
fn bandpass_gain(center: f64, q: f64, sample_rate: f64, hz: f64) -> f64 {
    let (b0, a1, a2) = bandpass_coefficients(center, q, sample_rate);
    let w = 2.0 * std::f64::consts::PI * hz / sample_rate;
    // H = b0 (1 - z^-2) / (1 + a1 z^-1 + a2 z^-2) at z = e^{jw}.
    let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
    let num = (b0 * (1.0 - c2), b0 * s2);
    let den = (1.0 + a1 * c1 + a2 * c2, -(a1 * s1 + a2 * s2));
    ((num.0 * num.0 + num.1 * num.1) / (den.0 * den.0 + den.1 * den.1)).sqrt()
}

fn bandpass_waveform(samples: &mut [f32], center: f64, q: f64, sample_rate: f64) {
    let (b0, a1, a2) = bandpass_coefficients(center, q, sample_rate);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for s in samples.iter_mut() {
        let x = f64::from(*s);
        let y = b0 * x - b0 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        *s = y as f32;
    }
}

/// Applies the drawn transforms to a waveform in place and returns the
/// pitch-shift ratio to apply to the magnitude spectrum, if any.
pub fn augment_waveform(
    samples: &mut [f32],
    sample_rate: u32,
    augs: &[Augmentation],
    rng: &mut impl Rng,
) -> Option<f64> {
    let mut pitch = None;
    for aug in augs {
        match aug.draw(rng) {
            None => {}
            Some(Applied::Noise(a)) => {
                let normal = Normal::new(0.0, a).expect("finite noise amplitude");
                for s in samples.iter_mut() {
                    *s += normal.sample(rng) as f32;
                }
            }
            Some(Applied::Gain(g)) => samples.iter_mut().for_each(|s| *s *= g as f32),
            Some(Applied::Polarity) => samples.iter_mut().for_each(|s| *s = -*s),
            Some(Applied::BandPass { center, q }) => {
                bandpass_waveform(samples, center, q, f64::from(sample_rate))
            }
            Some(Applied::Pitch(r)) => pitch = Some(r),
        }
    }
    pitch
}

/// Mel-domain analogues of the transforms, applied to log-mel features in place.
pub fn augment_features(features: &mut MelFeatures, augs: &[Augmentation], rng: &mut impl Rng) {
    let drawn: Vec<Applied> = augs.iter().filter_map(|a| a.draw(rng)).collect();
    if drawn.is_empty() {
        return;
    }
    let sr = f64::from(features.sample_rate());
    let edges = mel_band_edges(features.sample_rate(), N_MELS);
    let centers: Vec<f64> = (0..N_MELS).map(|j| edges[j + 1]).collect();
    let filters = mel_filterbank(features.sample_rate(), N_FFT, N_MELS);
    // Expected STFT magnitude of unit-variance white noise under a Hann window
    // is sqrt(sum w^2) = sqrt(3N/8) (times the Rayleigh mean sqrt(pi)/2).
    let noise_bin = (3.0 * N_FFT as f64 / 8.0).sqrt();
    let filter_mass: Vec<f64> = filters.rows().into_iter().map(|r| r.sum()).collect();

    let stack = features.stack_factor();
    let frames = features.frames_mut();
    let mut mag = vec![0.0f64; N_MELS];
    for mut row in frames.rows_mut() {
        for s in 0..stack {
            let band = row.slice_mut(ndarray::s![s * N_MELS..(s + 1) * N_MELS]);
            for (m, v) in mag.iter_mut().zip(band.iter()) {
                *m = (f64::from(*v).exp() - LOG_OFFSET).max(0.0);
            }
            for a in &drawn {
                match *a {
                    Applied::Noise(amp) => {
                        for (j, m) in mag.iter_mut().enumerate() {
                            let rayleigh = {
                                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                                (-2.0 * u.ln()).sqrt()
                            };
                            let n = amp * noise_bin * filter_mass[j] * rayleigh * 0.5;
                            *m = (*m * *m + n * n).sqrt();
                        }
                    }
                    Applied::Gain(g) => mag.iter_mut().for_each(|m| *m *= g),
                    Applied::Polarity => {}
                    Applied::BandPass { center, q } => {
                        for (m, f) in mag.iter_mut().zip(&centers) {
                            *m *= bandpass_gain(center, q, sr, *f);
                        }
                    }
                    Applied::Pitch(r) => {
                        // Band j takes the energy that was at centre_j / r.
                        let src = mag.clone();
                        for (j, m) in mag.iter_mut().enumerate() {
                            *m = interpolate(&centers, &src, centers[j] / r);
                        }
                    }
                }
            }
            let mut band = row.slice_mut(ndarray::s![s * N_MELS..(s + 1) * N_MELS]);
            for (v, m) in band.iter_mut().zip(&mag) {
                *v = (m + LOG_OFFSET).ln() as f32;
            }
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0] * (x / xs[0]).max(0.0);
    }
    let i = xs.partition_point(|&v| v < x);
    if i >= xs.len() {
        return 0.0;
    }
    let f = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] * (1.0 - f) + ys[i] * f
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn always(aug: Augmentation) -> Vec<Augmentation> {
        vec![aug]
    }

    #[test]
    fn gain_is_exact_in_the_mel_domain() {
        let frames = Array2::from_shape_fn((4, 80), |(i, j)| -3.0 + 0.01 * (i + j) as f32);
        let mut f = MelFeatures::new(frames.clone(), 16_000, 512, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        augment_features(
            &mut f,
            &always(Augmentation::Gain {
                min_gain_db: 6.0,
                max_gain_db: 6.0,
                p: 1.0,
            }),
            &mut rng,
        );
        let g = 10f64.powf(6.0 / 20.0);
        for (a, b) in frames.iter().zip(f.frames().iter()) {
            let want = ((f64::from(*a).exp() - LOG_OFFSET) * g + LOG_OFFSET).ln();
            assert!((f64::from(*b) - want).abs() < 1e-5);
        }
    }

    #[test]
    fn polarity_leaves_features_unchanged() {
        let frames = Array2::from_elem((3, 80), -2.0f32);
        let mut f = MelFeatures::new(frames.clone(), 16_000, 512, 1).unwrap();
        augment_features(&mut f, &always(Augmentation::PolarityInversion { p: 1.0 }), &mut ChaCha8Rng::seed_from_u64(1));
        for (a, b) in frames.iter().zip(f.frames().iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn bandpass_peaks_at_centre() {
        let g = |hz| bandpass_gain(1000.0, 2.0, 16_000.0, hz);
        assert!((g(1000.0) - 1.0).abs() < 1e-9);
        assert!(g(200.0) < 0.3 && g(5000.0) < 0.3);
    }

    #[test]
    fn pitch_shift_moves_a_spectral_peak() {
        let mut mag = vec![0.0; 513];
        mag[100] = 1.0;
        scale_spectrum(&mut mag, 2.0);
        let peak = mag.iter().enumerate().fold((0, 0.0), |b, (i, v)| if *v > b.1 { (i, *v) } else { b }).0;
        assert_eq!(peak, 200);
    }

    #[test]
    fn zero_probability_is_a_no_op() {
        let mut samples = vec![0.5f32; 100];
        let augs = vec![Augmentation::Gain {
            min_gain_db: 6.0,
            max_gain_db: 6.0,
            p: 0.0,
        }];
        assert!(augment_waveform(&mut samples, 16_000, &augs, &mut ChaCha8Rng::seed_from_u64(2)).is_none());
        assert!(samples.iter().all(|s| *s == 0.5));
    }

    #[test]
    fn augmentation_lists_parse_from_json() {
        let json = r#"[{"name":"polarity_inversion","p":0.5},{"name":"gain","min_gain_db":-6,"max_gain_db":6,"p":1}]"#;
        let augs: Vec<Augmentation> = serde_json::from_str(json).unwrap();
        assert_eq!(augs.len(), 2);
        let stock = serde_json::to_string(&Augmentation::stock()).unwrap();
        let back: Vec<Augmentation> = serde_json::from_str(&stock).unwrap();
        assert_eq!(back, Augmentation::stock());
    }
}
