use super::output::{ModelVersions, SentenceOnset, SongAlignment, WordOnset};
use crate::audio::{load_features, stack_frames, MelFeatures, SENTENCE_STACK};
use crate::error::{Error, Result};
use crate::model::{align, decode_onsets, AlignerWeights, AlignmentMatrix, Level};
use crate::par::{self, Exec};
use crate::text::{lyrics_to_ipa, G2pRegistry, TokenSequence, Vocabulary};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeOptions {
    /// Seconds added before each sentence onset when slicing.
    pub pad_pre: f64,
    /// Seconds added after the next sentence onset when slicing.
    pub pad_post: f64,
    /// Sort word onsets within each segment into non-decreasing order.
    pub monotonic: bool,
}

impl Default for CascadeOptions {
    fn default() -> Self {
        Self {
            pad_pre: 0.5,
            pad_post: 0.5,
            monotonic: false,
        }
    }
}

/// One decoded unit (a sentence or a word).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedUnit {
    pub text: String,
    pub onset_sec: f64,
    pub confidence: f64,
    /// Producing segment for words; the sentence's own index for sentences.
    pub segment_id: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub level: Level,
    pub units: Vec<AlignedUnit>,
    /// Mean of the unit confidences.
    pub song_confidence: f64,
}

impl AlignmentResult {
    fn new(level: Level, units: Vec<AlignedUnit>) -> Self {
        let song_confidence = if units.is_empty() {
            0.0
        } else {
            units.iter().map(|u| u.confidence).sum::<f64>() / units.len() as f64
        };
        Self {
            level,
            units,
            song_confidence,
        }
    }

    pub fn onsets(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.onset_sec).collect()
    }
}

/// A slice of the song handed to the word-level model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: usize,
    pub start_sec: f64,
    pub end_sec: f64,
}

/// Sentence onsets from whole-song stacked features and the full token
/// sequence. Returns the matrix too, for inspection.
pub fn align_sentences(
    stacked: &MelFeatures,
    lyrics: &TokenSequence,
    weights: &AlignerWeights,
) -> Result<(AlignmentResult, AlignmentMatrix)> {
    let matrix = align(&lyrics.tokens, stacked, weights)?;
    let decoded = decode_onsets(&matrix, &lyrics.sentence_starts, stacked)?;
    let units = decoded
        .iter()
        .zip(&lyrics.source_lines)
        .enumerate()
        .map(|(i, (d, text))| AlignedUnit {
            text: text.clone(),
            onset_sec: d.onset_sec,
            confidence: d.confidence,
            segment_id: i,
        })
        .collect();
    Ok((AlignmentResult::new(Level::Sentence, units), matrix))
}

/// Segment `i` runs from `onset_i − pad_pre` to `max(onset_i, onset_{i+1}) +
/// pad_post`, clamped to the song; the last one runs to the end of the song.
pub fn slice_segments(onsets: &[f64], duration_sec: f64, options: &CascadeOptions) -> Vec<Segment> {
    let clamp = |t: f64| t.clamp(0.0, duration_sec);
    onsets
        .iter()
        .enumerate()
        .map(|(i, &onset)| {
            let end = match onsets.get(i + 1) {
                Some(&next) => clamp(onset.max(next) + options.pad_post),
                None => duration_sec,
            };
            Segment {
                segment_id: i,
                start_sec: clamp(onset - options.pad_pre),
                end_sec: end,
            }
        })
        .collect()
}

/// Frames whose timestamps fall inside `[start_sec, end_sec]`; at least one.
pub fn segment_frame_range(segment: &Segment, features: &MelFeatures) -> (usize, usize) {
    let spf = features.seconds_per_frame();
    let total = features.num_frames();
    let eps = 1e-9;
    let f0 = ((segment.start_sec / spf - eps).ceil().max(0.0) as usize).min(total.saturating_sub(1));
    let f1 = (((segment.end_sec / spf + eps).floor().max(0.0) as usize) + 1).clamp(f0 + 1, total.max(f0 + 1));
    (f0, f1)
}

/// Word onsets for one sentence. `segment_tokens` must be a single line;
/// `offset_sec` is the song time of the segment's first frame.
pub fn align_words(
    segment_audio: &MelFeatures,
    segment_tokens: &TokenSequence,
    weights: &AlignerWeights,
    offset_sec: f64,
    segment_id: usize,
) -> Result<AlignmentResult> {
    if segment_tokens.num_sentences() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "word alignment takes one line, got {}",
            segment_tokens.num_sentences()
        )));
    }
    let matrix = align(&segment_tokens.tokens, segment_audio, weights)?;
    let decoded = decode_onsets(&matrix, &segment_tokens.word_starts, segment_audio)?;
    let units = decoded
        .iter()
        .zip(&segment_tokens.source_words)
        .map(|(d, text)| AlignedUnit {
            text: text.clone(),
            onset_sec: offset_sec + d.onset_sec,
            confidence: d.confidence,
            segment_id,
        })
        .collect();
    Ok(AlignmentResult::new(Level::Word, units))
}

/// Reassigns a segment's onsets in sorted order, leaving texts and
/// confidences in place.
pub fn smooth_monotonic(units: &mut [AlignedUnit]) {
    let mut onsets: Vec<f64> = units.iter().map(|u| u.onset_sec).collect();
    onsets.sort_by(f64::total_cmp);
    for (u, t) in units.iter_mut().zip(onsets) {
        u.onset_sec = t;
    }
}

/// Everything the cascade produced for one song.
#[derive(Clone, Debug)]
pub struct CascadeOutput {
    pub alignment: SongAlignment,
    pub sentences: AlignmentResult,
    pub words: AlignmentResult,
    pub segments: Vec<Segment>,
    pub sentence_matrix: AlignmentMatrix,
    /// Time step of a `sentence_matrix` column.
    pub sentence_seconds_per_frame: f64,
}

/// Wall time spent in each cascade stage for one song.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimes {
    pub text: Duration,
    pub audio: Duration,
    pub sentence_model: Duration,
    pub word_model: Duration,
}

impl StageTimes {
    pub fn sum(&self) -> Duration {
        self.text + self.audio + self.sentence_model + self.word_model
    }
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed();
    out
}

/// The two models plus the text front end.
pub struct Cascade {
    sentence: AlignerWeights,
    word: AlignerWeights,
    versions: ModelVersions,
    pub g2p: G2pRegistry,
    pub vocab: Vocabulary,
    pub options: CascadeOptions,
    pub exec: Exec,
}

impl Cascade {
    pub fn new(sentence: AlignerWeights, word: AlignerWeights, g2p: G2pRegistry, vocab: Vocabulary) -> Result<Self> {
        if sentence.config.level != Level::Sentence {
            return Err(Error::InvalidConfig("sentence weights are not sentence-level".into()));
        }
        if word.config.level != Level::Word {
            return Err(Error::InvalidConfig("word weights are not word-level".into()));
        }
        let versions = ModelVersions {
            sentence: sentence.fingerprint(),
            word: word.fingerprint(),
        };
        Ok(Self {
            sentence,
            word,
            versions,
            g2p,
            vocab,
            options: CascadeOptions::default(),
            exec: Exec::default(),
        })
    }

    pub fn with_options(mut self, options: CascadeOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn sentence_weights(&self) -> &AlignerWeights {
        &self.sentence
    }

    pub fn word_weights(&self) -> &AlignerWeights {
        &self.word
    }

    /// Fingerprints of both models, computed once at construction.
    pub fn model_versions(&self) -> ModelVersions {
        self.versions.clone()
    }

    /// Loads audio (or a feature cache), tokenises the lyrics and aligns.
    pub fn align_song(&self, song_id: &str, audio_path: &Path, lyrics: &str, language: &str) -> Result<CascadeOutput> {
        self.align_song_timed(song_id, audio_path, lyrics, language).map(|(out, _)| out)
    }

    /// [`Cascade::align_song`] that also reports per-stage wall time.
    pub fn align_song_timed(
        &self,
        song_id: &str,
        audio_path: &Path,
        lyrics: &str,
        language: &str,
    ) -> Result<(CascadeOutput, StageTimes)> {
        let mut times = StageTimes::default();
        let mut run = || {
            let tokens = timed(&mut times.text, || lyrics_to_ipa(lyrics, language, &self.g2p, &self.vocab))?;
            let features = timed(&mut times.audio, || load_features(audio_path))?;
            self.run_features(song_id, &features, &tokens, &mut times)
        };
        let out = run().map_err(|e| e.in_song(song_id))?;
        Ok((out, times))
    }

    /// Cascade on stack-1 features and tokenised lyrics.
    pub fn align_features(&self, song_id: &str, features: &MelFeatures, lyrics: &TokenSequence) -> Result<CascadeOutput> {
        self.run_features(song_id, features, lyrics, &mut StageTimes::default())
            .map_err(|e| e.in_song(song_id))
    }

    fn run_features(
        &self,
        song_id: &str,
        features: &MelFeatures,
        lyrics: &TokenSequence,
        times: &mut StageTimes,
    ) -> Result<CascadeOutput> {
        let duration = features.duration_sec();
        let (mut sentences, sentence_matrix) = timed(&mut times.sentence_model, || {
            let stacked = stack_frames(features, SENTENCE_STACK)?;
            align_sentences(&stacked, lyrics, &self.sentence)
        })?;
        for u in &mut sentences.units {
            u.onset_sec = u.onset_sec.min(duration);
        }
        let segments = slice_segments(&sentences.onsets(), duration, &self.options);
        let per_segment = timed(&mut times.word_model, || par::map(self.exec, &segments, |seg| {
            let (f0, f1) = segment_frame_range(seg, features);
            let audio = features.slice_frames(f0, f1);
            let line = lyrics.sentence(seg.segment_id, self.vocab.silence_id());
            let mut r = align_words(&audio, &line, &self.word, features.frame_to_seconds(f0), seg.segment_id)?;
            if self.options.monotonic {
                smooth_monotonic(&mut r.units);
            }
            Ok::<_, Error>(r.units)
        }));
        let mut units = Vec::with_capacity(lyrics.num_words());
        for r in per_segment {
            units.extend(r?);
        }
        let words = AlignmentResult::new(Level::Word, units);
        let alignment = SongAlignment {
            song_id: song_id.to_owned(),
            duration_sec: duration,
            sentences: sentences
                .units
                .iter()
                .map(|u| SentenceOnset {
                    text: u.text.clone(),
                    onset_sec: u.onset_sec,
                    confidence: u.confidence,
                })
                .collect(),
            words: words
                .units
                .iter()
                .map(|u| WordOnset {
                    text: u.text.clone(),
                    onset_sec: u.onset_sec,
                    confidence: u.confidence,
                    segment_id: u.segment_id,
                })
                .collect(),
            song_confidence: sentences.song_confidence,
            model_versions: self.model_versions(),
        };
        Ok(CascadeOutput {
            alignment,
            sentences,
            words,
            segments,
            sentence_matrix,
            sentence_seconds_per_frame: features.seconds_per_frame() * SENTENCE_STACK as f64,
        })
    }
}
