use crate::config::{set, set_opt};
use crate::{Outcome, FAILURES_FILE};
use anyhow::{bail, Context};
use clap::Args;
use lyralign::cascade::{matrix_path_for, save_matrix, Cascade, CascadeOptions, CascadeOutput};
use lyralign::datasets::{load_manifest, Store};
use lyralign::model::AlignerWeights;
use lyralign::par::{self, Exec};
use lyralign::text::{G2pRegistry, Vocabulary};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Song manifest (JSON lines).
    #[arg(long, conflicts_with_all = ["audio", "lyrics"])]
    pub manifest: Option<PathBuf>,
    /// Single audio file or feature cache.
    #[arg(long, requires = "lyrics")]
    pub audio: Option<PathBuf>,
    /// Lyrics text for `--audio`.
    #[arg(long, requires = "audio")]
    pub lyrics: Option<PathBuf>,
    /// Song id for `--audio` (default: the audio file stem).
    #[arg(long)]
    pub song_id: Option<String>,
    /// Lyrics language for `--audio`.
    #[arg(long)]
    pub language: Option<String>,
    #[arg(long)]
    pub weights_sentence: Option<PathBuf>,
    #[arg(long)]
    pub weights_word: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write an enhanced LRC file per song.
    #[arg(long)]
    pub lrc: bool,
    /// Sort word onsets within each line.
    #[arg(long)]
    pub monotonic: bool,
    #[arg(long)]
    pub pad_pre: Option<f64>,
    #[arg(long)]
    pub pad_post: Option<f64>,
    /// Skip writing the sentence alignment matrix.
    #[arg(long)]
    pub no_matrix: bool,
    /// Record each alignment in the manifest and move the song to machine_labeled.
    #[arg(long, requires = "manifest")]
    pub attach: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub manifest: Option<PathBuf>,
    pub audio: Option<PathBuf>,
    pub lyrics: Option<PathBuf>,
    pub song_id: Option<String>,
    pub language: String,
    pub weights_sentence: Option<PathBuf>,
    pub weights_word: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub lrc: bool,
    pub monotonic: bool,
    pub pad_pre: f64,
    pub pad_post: f64,
    pub matrix: bool,
    pub attach: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        let opts = CascadeOptions::default();
        Self {
            manifest: None,
            audio: None,
            lyrics: None,
            song_id: None,
            language: "en".into(),
            weights_sentence: None,
            weights_word: None,
            out_dir: PathBuf::from("alignments"),
            lrc: false,
            monotonic: opts.monotonic,
            pad_pre: opts.pad_pre,
            pad_post: opts.pad_post,
            matrix: true,
            attach: false,
        }
    }
}

impl AlignArgs {
    pub fn resolve(&self, file: Option<AlignConfig>) -> anyhow::Result<AlignConfig> {
        let mut c = file.unwrap_or_default();
        if self.manifest.is_some() {
            c.audio = None;
            c.lyrics = None;
        }
        if self.audio.is_some() {
            c.manifest = None;
        }
        set_opt(&mut c.manifest, self.manifest.clone());
        set_opt(&mut c.audio, self.audio.clone());
        set_opt(&mut c.lyrics, self.lyrics.clone());
        set_opt(&mut c.song_id, self.song_id.clone());
        set(&mut c.language, self.language.clone());
        set_opt(&mut c.weights_sentence, self.weights_sentence.clone());
        set_opt(&mut c.weights_word, self.weights_word.clone());
        set(&mut c.out_dir, self.out_dir.clone());
        c.lrc |= self.lrc;
        c.monotonic |= self.monotonic;
        set(&mut c.pad_pre, self.pad_pre);
        set(&mut c.pad_post, self.pad_post);
        c.matrix &= !self.no_matrix;
        c.attach |= self.attach;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SongFailure {
    pub song_id: String,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct AlignReport {
    /// Alignment JSON paths, in input order.
    pub written: Vec<PathBuf>,
    pub failures: Vec<SongFailure>,
}

impl AlignReport {
    pub fn outcome(&self) -> Outcome {
        if self.failures.is_empty() {
            Outcome::Success
        } else {
            Outcome::Partial
        }
    }
}

struct Job {
    id: String,
    audio: PathBuf,
    lyrics: PathBuf,
    language: String,
}

fn load_weights(path: Option<&Path>, what: &str) -> anyhow::Result<AlignerWeights> {
    let Some(path) = path else {
        bail!("missing --weights-{what}");
    };
    AlignerWeights::load(path).with_context(|| format!("load {what} weights"))
}

/// Builds the cascade from the configured weights.
pub(crate) fn build_cascade(
    sentence: Option<&Path>,
    word: Option<&Path>,
    options: CascadeOptions,
    exec: Exec,
) -> anyhow::Result<Cascade> {
    let sentence = load_weights(sentence, "sentence")?;
    let word = load_weights(word, "word")?;
    cascade_from(sentence, word, options, exec)
}

pub(crate) fn cascade_from(
    sentence: AlignerWeights,
    word: AlignerWeights,
    options: CascadeOptions,
    exec: Exec,
) -> anyhow::Result<Cascade> {
    let vocab = Vocabulary::v1();
    let g2p = G2pRegistry::bundled(Arc::new(vocab.clone()));
    Ok(Cascade::new(sentence, word, g2p, vocab)?
        .with_options(options)
        .with_exec(exec))
}

fn jobs(cfg: &AlignConfig) -> anyhow::Result<Vec<Job>> {
    if let Some(m) = &cfg.manifest {
        return Ok(load_manifest(m)?
            .into_iter()
            .map(|r| Job {
                audio: r.audio_ref().to_path_buf(),
                id: r.id,
                lyrics: r.lyrics_path,
                language: r.language,
            })
            .collect());
    }
    match (&cfg.audio, &cfg.lyrics) {
        (Some(audio), Some(lyrics)) => {
            let id = match &cfg.song_id {
                Some(id) => id.clone(),
                None => audio
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .context("cannot derive a song id from the audio path; pass --song-id")?,
            };
            Ok(vec![Job {
                id,
                audio: audio.clone(),
                lyrics: lyrics.clone(),
                language: cfg.language.clone(),
            }])
        }
        _ => bail!("pass --manifest, or --audio with --lyrics"),
    }
}

fn write_outputs(cfg: &AlignConfig, out: &CascadeOutput) -> anyhow::Result<PathBuf> {
    let a = &out.alignment;
    let path = cfg.out_dir.join(format!("{}.json", a.song_id));
    a.save(&path)?;
    if cfg.matrix {
        save_matrix(&matrix_path_for(&path), &out.sentence_matrix, out.sentence_seconds_per_frame)?;
    }
    if cfg.lrc {
        let lrc = path.with_extension("lrc");
        std::fs::write(&lrc, a.to_lrc()).with_context(|| format!("write {}", lrc.display()))?;
    }
    Ok(path)
}

/// Aligns every song, writing `{id}.json` (plus `{id}.lyam` and `{id}.lrc`
/// when enabled) into the output directory. Per-song errors are collected in
/// `failures.json` rather than aborting the batch.
pub fn cmd_align(cfg: &AlignConfig, exec: Exec) -> anyhow::Result<AlignReport> {
    let options = CascadeOptions {
        pad_pre: cfg.pad_pre,
        pad_post: cfg.pad_post,
        monotonic: cfg.monotonic,
    };
    let cascade = build_cascade(cfg.weights_sentence.as_deref(), cfg.weights_word.as_deref(), options, exec)?;
    let jobs = jobs(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("create {}", cfg.out_dir.display()))?;
    tracing::info!(songs = jobs.len(), out_dir = %cfg.out_dir.display(), "aligning");

    let results = par::map(exec, &jobs, |job| {
        let lyrics = std::fs::read_to_string(&job.lyrics).with_context(|| format!("read {}", job.lyrics.display()))?;
        let out = cascade.align_song(&job.id, &job.audio, &lyrics, &job.language)?;
        let path = write_outputs(cfg, &out)?;
        Ok::<_, anyhow::Error>((path, out.alignment.duration_sec))
    });

    let store = match (&cfg.manifest, cfg.attach) {
        (Some(m), true) => Some(Store::open(m)?),
        _ => None,
    };
    let mut report = AlignReport::default();
    for (job, r) in jobs.iter().zip(results) {
        let r = r.and_then(|(path, duration)| {
            if let Some(store) = &store {
                let abs = std::path::absolute(&path).unwrap_or_else(|_| path.clone());
                store.attach_alignment(&job.id, &abs, duration)?;
            }
            Ok(path)
        });
        match r {
            Ok(path) => report.written.push(path),
            Err(e) => {
                let error = crate::render_error(&e);
                tracing::warn!(song_id = %job.id, "alignment failed: {error}");
                report.failures.push(SongFailure {
                    song_id: job.id.clone(),
                    error,
                });
            }
        }
    }
    let failures = cfg.out_dir.join(FAILURES_FILE);
    if report.failures.is_empty() {
        if failures.exists() {
            std::fs::remove_file(&failures).with_context(|| format!("remove stale {}", failures.display()))?;
        }
    } else {
        std::fs::write(&failures, serde_json::to_string_pretty(&report.failures)? + "\n")
            .with_context(|| format!("write {}", failures.display()))?;
    }
    tracing::info!(aligned = report.written.len(), failed = report.failures.len(), "done");
    Ok(report)
}
