use super::augment::{augment_features, augment_waveform, scale_spectrum, Augmentation};
use super::target::TrainTarget;
use crate::audio::{
    load_audio, load_features, resample, stack_frames, wav_to_mel_with, MelFeatures, Waveform, SAMPLE_RATE,
    SENTENCE_STACK,
};
use crate::datasets::{Labels, SongRecord};
use crate::error::{Error, IoContext, Result};
use crate::model::Level;
use crate::par::{self, Exec};
use crate::text::{lyrics_to_ipa, G2pRegistry, TokenSequence, Vocabulary};
use rand::Rng;

/// A song with tokens, stack-1 features and (possibly partial) labels.
#[derive(Clone, Debug)]
pub struct SongExample {
    pub id: String,
    pub tokens: TokenSequence,
    pub features: MelFeatures,
    /// 16 kHz waveform when the song came from an audio file.
    pub waveform: Option<Waveform>,
    pub labels: Labels,
}

impl SongExample {
    pub fn duration_sec(&self) -> f64 {
        self.features.duration_sec()
    }

    /// Errors unless the labels carry what `level` trains on and agree with
    /// the lyrics' structure.
    pub fn check_level(&self, level: Level) -> Result<()> {
        let mismatch = |m: String| Err(Error::DataLevelMismatch(format!("{}: {m}", self.id)));
        match level {
            Level::Sentence => {
                if self.labels.sentences.is_empty() {
                    return mismatch("no sentence onsets for sentence-level training".into());
                }
                if self.labels.sentences.len() != self.tokens.num_sentences() {
                    return mismatch(format!(
                        "{} sentence labels for {} lyric lines",
                        self.labels.sentences.len(),
                        self.tokens.num_sentences()
                    ));
                }
            }
            Level::Word => match &self.labels.words {
                None => return mismatch("no word onsets for word-level training".into()),
                Some(w) if w.len() != self.tokens.num_words() => {
                    return mismatch(format!("{} word labels for {} lyric words", w.len(), self.tokens.num_words()))
                }
                Some(_) => {}
            },
        }
        Ok(())
    }

    /// Onset of line `i` taken from its first word, falling back to the
    /// sentence label.
    pub(crate) fn line_onset(&self, i: usize) -> f64 {
        let first_word = self.tokens.sentence_word_range(i).start;
        match &self.labels.words {
            Some(w) => w[first_word].start_sec,
            None => self.labels.sentences[i].start_sec,
        }
    }
}

/// Loads manifest records into examples (lyrics tokenised, audio decoded).
/// Records without a labels file get empty labels.
pub fn load_examples(
    records: &[SongRecord],
    registry: &G2pRegistry,
    vocab: &Vocabulary,
    exec: Exec,
) -> Result<Vec<SongExample>> {
    par::map(exec, records, |rec| load_example(rec, registry, vocab))
        .into_iter()
        .collect()
}

fn load_example(rec: &SongRecord, registry: &G2pRegistry, vocab: &Vocabulary) -> Result<SongExample> {
    let lyrics = std::fs::read_to_string(&rec.lyrics_path)
        .io_context(|| format!("read {}", rec.lyrics_path.display()))?;
    let tokens = lyrics_to_ipa(&lyrics, &rec.language, registry, vocab)?;
    let (features, waveform) = match (&rec.feature_cache_path, &rec.audio_path) {
        (Some(cache), _) => (load_features(cache)?, None),
        (None, Some(audio)) => {
            let mut wav = load_audio(audio)?;
            if wav.sample_rate != SAMPLE_RATE {
                wav = Waveform {
                    samples: resample(&wav.samples, wav.sample_rate, SAMPLE_RATE),
                    sample_rate: SAMPLE_RATE,
                };
            }
            (wav_to_mel_with(&wav.samples, SAMPLE_RATE, None)?, Some(wav))
        }
        (None, None) => unreachable!("manifest loader requires an audio reference"),
    };
    let labels = match &rec.labels_path {
        Some(p) => Labels::load(p)?,
        None => Labels::default(),
    };
    Ok(SongExample {
        id: rec.id.clone(),
        tokens,
        features,
        waveform,
        labels,
    })
}

/// Frame range `[f0, f1)` covering `[start_sec, end_sec]`, at least one frame.
pub(crate) fn segment_frames(start_sec: f64, end_sec: f64, seconds_per_frame: f64, total: usize) -> (usize, usize) {
    let f0 = ((start_sec / seconds_per_frame).floor().max(0.0) as usize).min(total.saturating_sub(1));
    let f1 = ((end_sec / seconds_per_frame).ceil().max(0.0) as usize).clamp(f0 + 1, total.max(f0 + 1));
    (f0, f1)
}

/// One model input with its supervision.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub song_id: String,
    pub tokens: Vec<usize>,
    pub features: MelFeatures,
    pub target: TrainTarget,
}

/// Features for frames `[f0, f1)` of a song, augmented.
fn augmented_frames(
    ex: &SongExample,
    f0: usize,
    f1: usize,
    augs: &[Augmentation],
    rng: &mut impl Rng,
) -> Result<MelFeatures> {
    if augs.is_empty() {
        return Ok(ex.features.slice_frames(f0, f1));
    }
    match &ex.waveform {
        Some(wav) => {
            let hop = ex.features.hop();
            let s0 = (f0 * hop).min(wav.samples.len());
            let s1 = (f1 * hop).min(wav.samples.len()).max(s0 + 1).min(wav.samples.len());
            let mut samples = wav.samples[s0..s1].to_vec();
            if samples.is_empty() {
                return Ok(ex.features.slice_frames(f0, f1));
            }
            let pitch = augment_waveform(&mut samples, wav.sample_rate, augs, rng);
            let hook = pitch.map(|r| move |mag: &mut [f64]| scale_spectrum(mag, r));
            let mel = wav_to_mel_with(
                &samples,
                wav.sample_rate,
                hook.as_ref().map(|h| h as &dyn Fn(&mut [f64])),
            )?;
            let n = (f1 - f0).min(mel.num_frames());
            Ok(mel.slice_frames(0, n))
        }
        None => {
            let mut f = ex.features.slice_frames(f0, f1);
            augment_features(&mut f, augs, rng);
            Ok(f)
        }
    }
}

/// Whole-song sentence-level item on stacked frames, truncated to `max_frames`
/// stacked frames (keeping only lines that end inside the window).
pub(crate) fn sentence_item(
    ex: &SongExample,
    max_frames: usize,
    augs: &[Augmentation],
    rng: &mut impl Rng,
) -> Result<TrainItem> {
    let total = ex.features.num_frames();
    let base = augmented_frames(ex, 0, total, augs, rng)?;
    let mut stacked = stack_frames(&base, SENTENCE_STACK)?;
    let spf = stacked.seconds_per_frame();
    let mut tokens = ex.tokens.tokens.clone();
    let mut lines = ex.tokens.num_sentences();
    if stacked.num_frames() > max_frames {
        let limit = max_frames as f64 * spf;
        lines = (0..ex.tokens.num_sentences())
            .take_while(|&i| {
                let end = if i + 1 < ex.tokens.num_sentences() {
                    ex.labels.sentences[i + 1].start_sec
                } else {
                    ex.duration_sec()
                };
                end <= limit
            })
            .count()
            .max(1);
        let end_token = ex.tokens.line_token_range(lines - 1).end;
        tokens.truncate(end_token);
        stacked = stacked.slice_frames(0, max_frames);
    }
    let t = stacked.num_frames();
    let targets = (0..lines)
        .map(|i| {
            let frame = stacked.seconds_to_frame(ex.labels.sentences[i].start_sec).min(t - 1);
            (ex.tokens.sentence_starts[i], frame)
        })
        .collect();
    Ok(TrainItem {
        song_id: ex.id.clone(),
        tokens,
        target: TrainTarget::new(targets, t)?,
        features: stacked,
    })
}

/// Single-line word-level item: the line's audio from its onset minus the pad
/// to the next line's onset plus the pad, each edge jittered by up to `jitter`.
pub(crate) fn word_item(
    ex: &SongExample,
    line: usize,
    pad: f64,
    jitter: f64,
    augs: &[Augmentation],
    rng: &mut impl Rng,
) -> Result<TrainItem> {
    let words = ex.labels.words.as_ref().expect("level checked");
    let n_lines = ex.tokens.num_sentences();
    let duration = ex.duration_sec();
    let mut j = || if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
    let start = (ex.line_onset(line) + j() - pad).max(0.0);
    let end = if line + 1 < n_lines {
        (ex.line_onset(line + 1) + j() + pad).min(duration)
    } else {
        duration
    };
    let spf = ex.features.seconds_per_frame();
    let (f0, f1) = segment_frames(start, end, spf, ex.features.num_frames());
    let features = augmented_frames(ex, f0, f1, augs, rng)?;
    let t = features.num_frames();
    let range = ex.tokens.line_token_range(line);
    let targets = ex
        .tokens
        .sentence_word_range(line)
        .map(|w| {
            let global = ex.features.seconds_to_frame(words[w].start_sec);
            let local = global.saturating_sub(f0).min(t - 1);
            (ex.tokens.word_starts[w] - range.start, local)
        })
        .collect();
    Ok(TrainItem {
        song_id: ex.id.clone(),
        tokens: ex.tokens.tokens[range].to_vec(),
        target: TrainTarget::new(targets, t)?,
        features,
    })
}
