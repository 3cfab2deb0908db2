use lyralign::audio::MelFeatures;
use lyralign::cascade::{
    align_words, segment_frame_range, slice_segments, smooth_monotonic, AlignedUnit, Cascade, CascadeOptions, Segment,
};
use lyralign::model::{align, decode_onsets, AlignerWeights, Level, ModelConfig};
use lyralign::text::{lyrics_to_ipa, G2pRegistry, Vocabulary};
use lyralign::training::{synth_corpus, SynthConfig};
use lyralign::Error;
use ndarray::Array2;
use proptest::prelude::*;
use std::sync::Arc;

fn opts() -> CascadeOptions {
    CascadeOptions::default()
}

fn cascade() -> Cascade {
    let vocab = Vocabulary::v1();
    let g2p = G2pRegistry::bundled(Arc::new(vocab.clone()));
    Cascade::new(
        AlignerWeights::init(ModelConfig::toy(Level::Sentence), 1).unwrap(),
        AlignerWeights::init(ModelConfig::toy(Level::Word), 2).unwrap(),
        g2p,
        vocab,
    )
    .unwrap()
}

#[test]
fn segments_follow_next_onset_with_pads() {
    let s = slice_segments(&[10.0, 20.0], 35.0, &opts());
    assert_eq!(
        s,
        vec![
            Segment {
                segment_id: 0,
                start_sec: 9.5,
                end_sec: 20.5
            },
            Segment {
                segment_id: 1,
                start_sec: 19.5,
                end_sec: 35.0
            },
        ]
    );
}

#[test]
fn single_segment_runs_to_end_and_start_is_clamped() {
    let s = slice_segments(&[4.0], 12.0, &opts());
    assert_eq!((s[0].start_sec, s[0].end_sec), (3.5, 12.0));
    let s = slice_segments(&[0.1], 12.0, &opts());
    assert_eq!(s[0].start_sec, 0.0);
}

#[test]
fn out_of_order_onsets_widen_rather_than_reorder() {
    let s = slice_segments(&[10.0, 5.0, 20.0], 30.0, &opts());
    assert_eq!((s[0].start_sec, s[0].end_sec), (9.5, 10.5));
    assert_eq!((s[1].start_sec, s[1].end_sec), (4.5, 20.5));
    assert_eq!(s.iter().map(|x| x.segment_id).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn segment_frames_lie_inside_segment() {
    let f = MelFeatures::new(Array2::zeros((400, 80)), 16_000, 512, 1).unwrap();
    for (a, b) in [(0.0, 1.0), (1.01, 3.3), (9.5, 12.8), (12.7, 12.8)] {
        let seg = Segment {
            segment_id: 0,
            start_sec: a,
            end_sec: b,
        };
        let (f0, f1) = segment_frame_range(&seg, &f);
        assert!(f1 > f0);
        assert!(f.frame_to_seconds(f0) >= a - 1e-12, "{a}");
        assert!(f.frame_to_seconds(f1 - 1) <= b + 1e-12, "{b}");
        // Maximal: the neighbours fall outside.
        if f0 > 0 {
            assert!(f.frame_to_seconds(f0 - 1) < a);
        }
        assert!(f1 == f.num_frames() || f.frame_to_seconds(f1) > b);
    }
}

#[test]
fn word_onsets_add_segment_offset() {
    let c = cascade();
    let seq = lyrics_to_ipa("hello world again", "en", &c.g2p, &c.vocab).unwrap();
    let audio = MelFeatures::new(Array2::from_elem((40, 80), -3.0), 16_000, 512, 1).unwrap();
    let r = align_words(&audio, &seq, c.word_weights(), 12.0, 3).unwrap();
    let m = align(&seq.tokens, &audio, c.word_weights()).unwrap();
    let local = decode_onsets(&m, &seq.word_starts, &audio).unwrap();
    assert_eq!(r.units.len(), 3);
    for (u, d) in r.units.iter().zip(&local) {
        assert_eq!(u.onset_sec, 12.0 + d.onset_sec);
        assert_eq!(u.confidence, d.confidence);
        assert_eq!(u.segment_id, 3);
    }
    assert_eq!(r.level, Level::Word);
}

#[test]
fn one_word_line_onset_is_inside_segment() {
    let c = cascade();
    let seq = lyrics_to_ipa("hello", "en", &c.g2p, &c.vocab).unwrap();
    let audio = MelFeatures::new(Array2::from_elem((25, 80), -2.0), 16_000, 512, 1).unwrap();
    let r = align_words(&audio, &seq, c.word_weights(), 5.0, 0).unwrap();
    assert_eq!(r.units.len(), 1);
    let t = r.units[0].onset_sec;
    assert!((5.0..=5.0 + audio.duration_sec()).contains(&t));
}

#[test]
fn word_alignment_rejects_multi_line_tokens() {
    let c = cascade();
    let seq = lyrics_to_ipa("hello\nworld", "en", &c.g2p, &c.vocab).unwrap();
    let audio = MelFeatures::new(Array2::zeros((25, 80)), 16_000, 512, 1).unwrap();
    assert!(align_words(&audio, &seq, c.word_weights(), 0.0, 0).is_err());
}

#[test]
fn weights_must_match_their_level() {
    let vocab = Vocabulary::v1();
    let g2p = G2pRegistry::bundled(Arc::new(vocab.clone()));
    let w = AlignerWeights::init(ModelConfig::toy(Level::Word), 1).unwrap();
    assert!(matches!(
        Cascade::new(w.clone(), w, g2p, vocab),
        Err(Error::InvalidConfig(_))
    ));
}

fn synth_song(seed: u64) -> lyralign::training::SynthSong {
    synth_corpus(1, seed, &Vocabulary::v1(), &SynthConfig::default()).unwrap().remove(0)
}

#[test]
fn cascade_output_is_well_formed_and_deterministic() {
    let c = cascade();
    let song = synth_song(5);
    let ex = &song.example;
    let out = c.align_features(&ex.id, &ex.features, &ex.tokens).unwrap();
    let a = &out.alignment;
    assert_eq!(a.sentences.len(), ex.tokens.num_sentences());
    assert_eq!(a.words.len(), ex.tokens.num_words());
    let duration = ex.features.duration_sec();
    for (w, word_range) in (0..ex.tokens.num_sentences()).map(|i| (i, ex.tokens.sentence_word_range(i))) {
        for k in word_range {
            assert_eq!(a.words[k].segment_id, w);
            assert_eq!(a.words[k].text, ex.tokens.source_words[k]);
            let seg = out.segments[w];
            assert!(a.words[k].onset_sec >= seg.start_sec - 1e-9 && a.words[k].onset_sec <= seg.end_sec + 1e-9);
        }
    }
    for s in &a.sentences {
        assert!((0.0..=duration).contains(&s.onset_sec));
        assert!((0.0..=1.0).contains(&s.confidence));
    }
    let mean = a.sentences.iter().map(|s| s.confidence).sum::<f64>() / a.sentences.len() as f64;
    assert!((a.song_confidence - mean).abs() < 1e-12);
    assert_eq!(a.model_versions, c.model_versions());

    let again = c.align_features(&ex.id, &ex.features, &ex.tokens).unwrap();
    assert_eq!(a.to_json().unwrap(), again.alignment.to_json().unwrap());
    let seq = c.with_exec(lyralign::par::Exec::Sequential);
    let third = seq.align_features(&ex.id, &ex.features, &ex.tokens).unwrap();
    assert_eq!(a.to_json().unwrap(), third.alignment.to_json().unwrap());
}

#[test]
fn segments_cover_the_song() {
    let c = cascade();
    let song = synth_song(8);
    let ex = &song.example;
    let out = c.align_features(&ex.id, &ex.features, &ex.tokens).unwrap();
    let duration = ex.features.duration_sec();
    let mut ivs: Vec<(f64, f64)> = out.segments.iter().map(|s| (s.start_sec, s.end_sec)).collect();
    ivs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Covered from the first segment start to the end of the song without holes.
    let mut reach = ivs[0].0;
    for (a, b) in &ivs {
        assert!(*a <= reach + 1e-9, "hole before {a}");
        reach = reach.max(*b);
    }
    assert_eq!(reach, duration);
}

#[test]
fn monotonic_option_orders_words_within_segments() {
    let song = synth_song(3);
    let ex = &song.example;
    let raw = cascade().align_features(&ex.id, &ex.features, &ex.tokens).unwrap();
    let smooth = cascade()
        .with_options(CascadeOptions {
            monotonic: true,
            ..opts()
        })
        .align_features(&ex.id, &ex.features, &ex.tokens)
        .unwrap();
    for i in 0..ex.tokens.num_sentences() {
        let r = ex.tokens.sentence_word_range(i);
        let ws = &smooth.alignment.words[r.clone()];
        assert!(ws.windows(2).all(|p| p[0].onset_sec <= p[1].onset_sec));
        let mut a: Vec<f64> = raw.alignment.words[r].iter().map(|w| w.onset_sec).collect();
        a.sort_by(f64::total_cmp);
        assert_eq!(a, ws.iter().map(|w| w.onset_sec).collect::<Vec<_>>());
    }
}

#[test]
fn single_line_song_has_one_sentence() {
    let c = cascade();
    let seq = lyrics_to_ipa("hold me now", "en", &c.g2p, &c.vocab).unwrap();
    let f = MelFeatures::new(Array2::from_elem((120, 80), -4.0), 16_000, 512, 1).unwrap();
    let out = c.align_features("one", &f, &seq).unwrap();
    assert_eq!(out.sentences.units.len(), 1);
    assert_eq!(out.segments.len(), 1);
    assert_eq!(out.segments[0].end_sec, f.duration_sec());
}

#[test]
fn errors_carry_song_context() {
    let c = cascade();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.lymf");
    lyralign::audio::write_feature_cache(&path, &MelFeatures::new(Array2::zeros((50, 80)), 16_000, 512, 1).unwrap())
        .unwrap();
    let err = c.align_song("song-7", &path, " \n ", "en").unwrap_err();
    assert!(matches!(err.root(), Error::EmptyLyrics));
    assert!(err.to_string().contains("song-7"));
}

proptest! {
    #[test]
    fn smoothing_only_permutes_onsets(ts in prop::collection::vec(0.0f64..100.0, 0..12)) {
        let mut units: Vec<AlignedUnit> = ts.iter().enumerate().map(|(i, &t)| AlignedUnit {
            text: format!("w{i}"), onset_sec: t, confidence: i as f64 / 20.0, segment_id: 0,
        }).collect();
        smooth_monotonic(&mut units);
        prop_assert!(units.windows(2).all(|p| p[0].onset_sec <= p[1].onset_sec));
        let mut sorted = ts.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(units.iter().map(|u| u.onset_sec).collect::<Vec<_>>(), sorted);
        let texts_in_place = units.iter().enumerate().all(|(i, u)| u.text == format!("w{i}"));
        prop_assert!(texts_in_place);
    }

    #[test]
    fn segments_are_clamped_and_ordered(mut onsets in prop::collection::vec(0.0f64..60.0, 1..10), extra in 0.0f64..10.0) {
        let duration = onsets.iter().cloned().fold(0.0, f64::max) + extra;
        onsets.iter_mut().for_each(|o| *o = o.min(duration));
        let segs = slice_segments(&onsets, duration, &CascadeOptions::default());
        prop_assert_eq!(segs.len(), onsets.len());
        for (i, s) in segs.iter().enumerate() {
            prop_assert!(0.0 <= s.start_sec && s.start_sec <= s.end_sec && s.end_sec <= duration);
            prop_assert!(s.start_sec <= onsets[i] && onsets[i] <= s.end_sec);
        }
        prop_assert_eq!(segs.last().unwrap().end_sec, duration);
    }
}
