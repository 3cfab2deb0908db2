//! Synthetic corpus: random IPA lyrics rendered as log-mel frames from fixed
//! per-token spectral templates, with exact onsets known by construction.

use super::examples::SongExample;
use crate::audio::{write_feature_cache, MelFeatures, HOP, N_MELS, SAMPLE_RATE};
use crate::datasets::{save_manifest, LabelUnit, Labels, SongRecord, SongStatus};
use crate::error::{IoContext, Result};
use crate::text::{lyrics_to_ipa, normalize_word, G2pRegistry, Vocabulary};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Generator ranges (inclusive) and levels. Templates depend only on
/// `template_seed`, so corpora with different seeds share the same "voice".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub lines: (usize, usize),
    pub words_per_line: (usize, usize),
    pub phones_per_word: (usize, usize),
    pub frames_per_token: (usize, usize),
    pub gap_frames: (usize, usize),
    pub edge_frames: (usize, usize),
    /// Per-song noise standard deviation is drawn from this range.
    pub noise_std: (f64, f64),
    pub template_seed: u64,
    pub template_mean: f64,
    pub template_std: f64,
    pub silence_level: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lines: (3, 5),
            words_per_line: (2, 4),
            phones_per_word: (1, 3),
            frames_per_token: (3, 10),
            gap_frames: (6, 16),
            edge_frames: (4, 12),
            noise_std: (0.5, 2.0),
            template_seed: 7,
            template_mean: -3.0,
            template_std: 1.5,
            silence_level: -8.0,
        }
    }
}

/// A generated song: the training view plus its lyric text.
#[derive(Clone, Debug)]
pub struct SynthSong {
    pub example: SongExample,
    pub lyrics: String,
    pub noise_std: f64,
}

/// Log-mel template for every vocabulary id (`[V, 80]`); the silence row is flat.
pub fn token_templates(vocab: &Vocabulary, cfg: &SynthConfig) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.template_seed);
    let normal = Normal::new(cfg.template_mean, cfg.template_std).expect("finite template spread");
    let mut t = Array2::<f32>::zeros((vocab.len(), N_MELS));
    for (id, mut row) in t.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v = if id == vocab.silence_id() {
                cfg.silence_level as f32
            } else {
                normal.sample(&mut rng) as f32
            };
        }
    }
    t
}

fn between(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo..=hi.max(lo))
}

/// Generates `n_songs` songs deterministically from `seed`.
pub fn synth_corpus(n_songs: usize, seed: u64, vocab: &Vocabulary, cfg: &SynthConfig) -> Result<Vec<SynthSong>> {
    let templates = token_templates(vocab, cfg);
    let registry = G2pRegistry::bundled(Arc::new(vocab.clone()));
    let ipa = registry.backend("ipa")?;
    let symbols: Vec<(usize, String)> = vocab.ipa_symbols().map(|(i, s)| (i, s.to_string())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut songs = Vec::with_capacity(n_songs);
    for n in 0..n_songs {
        // Lyrics: words are concatenated IPA symbols; a word is redrawn until
        // the IPA segmenter splits it back into exactly the drawn symbols.
        let mut lines: Vec<Vec<String>> = Vec::new();
        let mut last = usize::MAX;
        for _ in 0..between(&mut rng, cfg.lines) {
            let mut words = Vec::new();
            for _ in 0..between(&mut rng, cfg.words_per_line) {
                loop {
                    let mut ids = Vec::new();
                    let mut prev = last;
                    for _ in 0..between(&mut rng, cfg.phones_per_word) {
                        let mut pick = symbols[rng.gen_range(0..symbols.len())].0;
                        while pick == prev {
                            pick = symbols[rng.gen_range(0..symbols.len())].0;
                        }
                        ids.push(pick);
                        prev = pick;
                    }
                    let word: String = ids.iter().map(|&i| vocab.symbol(i).unwrap()).collect();
                    let back: Option<Vec<usize>> = ipa
                        .phonemize(&word)
                        .ok()
                        .map(|syms| syms.iter().filter_map(|s| vocab.id(s)).collect());
                    if normalize_word(&word) == word && back.as_deref() == Some(&ids[..]) {
                        last = prev;
                        words.push(word);
                        break;
                    }
                }
            }
            lines.push(words);
        }
        let lyrics: String = lines.iter().map(|l| l.join(" ") + "\n").collect();
        let tokens = lyrics_to_ipa(&lyrics, "ipa", &registry, vocab)?;

        let noise_std = if cfg.noise_std.1 > cfg.noise_std.0 {
            rng.gen_range(cfg.noise_std.0..cfg.noise_std.1)
        } else {
            cfg.noise_std.0
        };
        // Render frame by frame, recording each token's onset frame.
        let mut frame_ids: Vec<usize> = Vec::new();
        let mut onsets = Vec::with_capacity(tokens.len());
        let sil = vocab.silence_id();
        frame_ids.extend(std::iter::repeat(sil).take(between(&mut rng, cfg.edge_frames)));
        for &tok in &tokens.tokens {
            onsets.push(frame_ids.len());
            let len = if tok == sil {
                between(&mut rng, cfg.gap_frames)
            } else {
                between(&mut rng, cfg.frames_per_token)
            };
            frame_ids.extend(std::iter::repeat(tok).take(len));
        }
        frame_ids.extend(std::iter::repeat(sil).take(between(&mut rng, cfg.edge_frames)));

        let normal = Normal::new(0.0, noise_std.max(0.0)).expect("finite noise");
        let mut frames = Array2::<f32>::zeros((frame_ids.len(), N_MELS));
        for (f, mut row) in frames.rows_mut().into_iter().enumerate() {
            let tpl = templates.row(frame_ids[f]);
            for (v, t) in row.iter_mut().zip(tpl.iter()) {
                *v = if noise_std > 0.0 {
                    *t + normal.sample(&mut rng) as f32
                } else {
                    *t
                };
            }
        }
        let features = MelFeatures::new(frames, SAMPLE_RATE, HOP, 1)?;
        let spf = features.seconds_per_frame();
        let at = |token: usize| onsets[token] as f64 * spf;
        let labels = Labels {
            sentences: tokens
                .sentence_starts
                .iter()
                .zip(&tokens.source_lines)
                .map(|(&s, text)| LabelUnit {
                    start_sec: at(s),
                    text: text.clone(),
                })
                .collect(),
            words: Some(
                tokens
                    .word_starts
                    .iter()
                    .zip(&tokens.source_words)
                    .map(|(&w, text)| LabelUnit {
                        start_sec: at(w),
                        text: text.clone(),
                    })
                    .collect(),
            ),
        };
        songs.push(SynthSong {
            example: SongExample {
                id: format!("synth-{seed}-{n:04}"),
                tokens,
                features,
                waveform: None,
                labels,
            },
            lyrics,
            noise_std,
        });
    }
    Ok(songs)
}

/// Writes feature caches, lyrics, labels and a manifest under `dir`; returns
/// the manifest path.
pub fn write_synth_corpus(dir: &Path, songs: &[SynthSong]) -> Result<PathBuf> {
    for sub in ["features", "lyrics", "labels"] {
        std::fs::create_dir_all(dir.join(sub)).io_context(|| format!("create {}", dir.join(sub).display()))?;
    }
    let mut records = Vec::with_capacity(songs.len());
    for song in songs {
        let ex = &song.example;
        let feat = dir.join("features").join(format!("{}.lymf", ex.id));
        let lyr = dir.join("lyrics").join(format!("{}.txt", ex.id));
        let lab = dir.join("labels").join(format!("{}.json", ex.id));
        write_feature_cache(&feat, &ex.features)?;
        std::fs::write(&lyr, &song.lyrics).io_context(|| format!("write {}", lyr.display()))?;
        ex.labels.save(&lab)?;
        records.push(SongRecord {
            id: ex.id.clone(),
            audio_path: None,
            feature_cache_path: Some(feat),
            lyrics_path: lyr,
            labels_path: Some(lab),
            alignment_path: None,
            language: "ipa".into(),
            duration_sec: Some(ex.duration_sec()),
            status: SongStatus::Unlabeled,
        });
    }
    let manifest = dir.join("manifest.jsonl");
    save_manifest(&manifest, &records)?;
    Ok(manifest)
}
