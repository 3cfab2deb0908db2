use lyralign::audio::*;
use lyralign::Error;
use proptest::prelude::*;

fn sine(freq: f64, seconds: f64, rate: u32) -> Vec<f32> {
    let n = (seconds * f64::from(rate)) as usize;
    (0..n)
        .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin()) as f32)
        .collect()
}

#[test]
fn silence_gives_constant_floor_frames() {
    let mel = wav_to_mel(&vec![0.0; 16_000], 16_000).unwrap();
    // centred frames: 1 + floor(16000 / 512)
    assert_eq!(mel.num_frames(), 32);
    assert_eq!(mel.width(), 80);
    let floor = (1e-5f64).ln() as f32;
    assert!(mel.frames().iter().all(|v| *v == floor));
}

#[test]
fn ten_seconds_yields_313_frames() {
    let mel = wav_to_mel(&vec![0.0; 160_000], 16_000).unwrap();
    assert_eq!(mel.num_frames(), 160_000 / 512 + 1);
    assert_eq!(mel.num_frames(), 313);
}

#[test]
fn sine_peaks_in_filter_centred_nearest_its_frequency() {
    // Independent oracle: filter centres from the HTK mel formula written out here.
    let top_mel = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
    let centres: Vec<f64> = (1..=80)
        .map(|i| 700.0 * (10f64.powf(top_mel * i as f64 / 81.0 / 2595.0) - 1.0))
        .collect();
    let expected = centres
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 440.0).abs().total_cmp(&(b.1 - 440.0).abs()))
        .unwrap()
        .0;

    let mel = wav_to_mel(&sine(440.0, 1.0, 16_000), 16_000).unwrap();
    let means: Vec<f64> = (0..80)
        .map(|m| mel.frames().column(m).iter().map(|v| f64::from(*v)).sum::<f64>())
        .collect();
    let loudest = means
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(loudest, expected);
}

#[test]
fn resampled_input_lands_on_16k_frame_grid() {
    let mel = wav_to_mel(&sine(440.0, 1.0, 44_100), 44_100).unwrap();
    assert_eq!(mel.sample_rate(), 16_000);
    assert_eq!(mel.num_frames(), 32);
}

#[test]
fn empty_audio_is_rejected() {
    assert!(matches!(wav_to_mel(&[], 16_000), Err(Error::EmptyAudio)));
}

#[test]
fn wav_to_mel_is_bit_deterministic() {
    let x = sine(330.0, 0.5, 16_000);
    assert_eq!(wav_to_mel(&x, 16_000).unwrap(), wav_to_mel(&x, 16_000).unwrap());
}

#[test]
fn wav_file_stereo_is_downmixed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("st.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for _ in 0..100 {
        w.write_sample(16384i16).unwrap();
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    let wav = load_audio(&path).unwrap();
    assert_eq!(wav.samples.len(), 100);
    assert!((wav.samples[0] - 0.25).abs() < 1e-6);
}

#[test]
fn garbage_file_is_corrupt_audio() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    std::fs::write(&path, b"definitely not riff").unwrap();
    assert!(matches!(load_audio(&path), Err(Error::CorruptAudio(_))));
}

#[test]
fn cache_rejects_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.lymf");
    std::fs::write(&path, b"NOPE0000000000000000000000000000").unwrap();
    assert!(matches!(read_feature_cache(&path), Err(Error::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feature_cache_round_trip_is_bit_identical(
        t in 1usize..40,
        stack in prop::sample::select(vec![1usize, 4]),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frames = ndarray::Array2::from_shape_fn((t, 80 * stack), |_| rng.gen_range(-12.0f32..4.0));
        let f = MelFeatures::new(frames, 16_000, 512, stack).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.lymf");
        write_feature_cache(&path, &f).unwrap();
        prop_assert_eq!(read_feature_cache(&path).unwrap(), f);
    }

    #[test]
    fn stack_then_unstack_is_identity_for_multiples_of_four(groups in 1usize..20) {
        let frames = ndarray::Array2::from_shape_fn((groups * 4, 80), |(i, j)| (i * 80 + j) as f32);
        let f = MelFeatures::new(frames, 16_000, 512, 1).unwrap();
        let s = stack_frames(&f, SENTENCE_STACK).unwrap();
        prop_assert_eq!(s.width(), 320);
        prop_assert_eq!(unstack_frames(&s), f);
    }
}
