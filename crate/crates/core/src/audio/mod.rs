//! Audio preprocessing: separated-vocal waveforms to log-mel features.

mod features;
mod io;
mod mel;
mod resample;

pub use features::{frame_to_seconds, stack_frames, unstack_frames, FeatureStats, MelFeatures};
pub use io::{
    load_audio, load_features, read_feature_cache, write_feature_cache, write_wav, Waveform,
};
pub use mel::{
    frame_count, hz_to_mel, mel_band_edges, mel_filterbank, mel_to_hz, wav_to_mel, wav_to_mel_with, HOP,
    LOG_OFFSET, N_FFT, N_MELS, SAMPLE_RATE,
};
pub use resample::resample;

/// Frame-compression factor used by the sentence-level model.
pub const SENTENCE_STACK: usize = 4;
