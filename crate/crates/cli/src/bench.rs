use crate::align::{build_cascade, cascade_from};
use crate::config::{set, set_opt};
use crate::train::ModelSize;
use anyhow::{bail, Context};
use clap::Args;
use lyralign::cascade::{CascadeOptions, StageTimes};
use lyralign::datasets::load_manifest;
use lyralign::model::{AlignerWeights, Level};
use lyralign::par::Exec;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

pub const STAGES: [&str; 5] = ["text", "audio", "sentence model", "word model", "total"];

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub weights_sentence: Option<PathBuf>,
    #[arg(long)]
    pub weights_word: Option<PathBuf>,
    /// Model size to initialise randomly when no weights are given.
    #[arg(long, value_enum)]
    pub model: Option<ModelSize>,
    /// Passes over the manifest.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Also write the rows as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub manifest: Option<PathBuf>,
    pub weights_sentence: Option<PathBuf>,
    pub weights_word: Option<PathBuf>,
    pub model: ModelSize,
    pub repeats: usize,
    pub out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            weights_sentence: None,
            weights_word: None,
            model: ModelSize::Stock,
            repeats: 1,
            out: None,
        }
    }
}

impl BenchArgs {
    pub fn resolve(&self, file: Option<BenchConfig>) -> anyhow::Result<BenchConfig> {
        let mut c = file.unwrap_or_default();
        set_opt(&mut c.manifest, self.manifest.clone());
        set_opt(&mut c.weights_sentence, self.weights_sentence.clone());
        set_opt(&mut c.weights_word, self.weights_word.clone());
        set(&mut c.model, self.model);
        set(&mut c.repeats, self.repeats);
        set_opt(&mut c.out, self.out.clone());
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub stage: String,
    /// Mean wall time per song.
    pub mean_sec: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub songs: usize,
    pub runs: usize,
    /// Text, audio, sentence model, word model, total.
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, stage: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.stage == stage).map(|r| r.mean_sec)
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<16} {:>12}\n", "stage", "mean (s)");
        for r in &self.rows {
            let _ = writeln!(s, "{:<16} {:>12.6}", r.stage, r.mean_sec);
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("stage,mean_sec\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{}", r.stage, r.mean_sec);
        }
        s
    }
}

/// Aligns each manifest song one at a time and reports the mean wall time
/// of every cascade stage plus the whole call.
pub fn cmd_bench(cfg: &BenchConfig, exec: Exec) -> anyhow::Result<BenchReport> {
    let Some(manifest) = &cfg.manifest else {
        bail!("missing --manifest");
    };
    if cfg.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let options = CascadeOptions::default();
    let cascade = match (&cfg.weights_sentence, &cfg.weights_word) {
        (None, None) => {
            tracing::warn!(model = ?cfg.model, "no weights given; timing randomly initialised models");
            cascade_from(
                AlignerWeights::init(cfg.model.config(Level::Sentence), 0)?,
                AlignerWeights::init(cfg.model.config(Level::Word), 0)?,
                options,
                exec,
            )?
        }
        (s, w) => build_cascade(s.as_deref(), w.as_deref(), options, exec)?,
    };
    let records = load_manifest(manifest)?;
    if records.is_empty() {
        bail!("manifest {} has no songs", manifest.display());
    }
    let mut stages = StageTimes::default();
    let mut total = Duration::ZERO;
    let mut runs = 0usize;
    for _ in 0..cfg.repeats {
        for rec in &records {
            let lyrics = std::fs::read_to_string(&rec.lyrics_path)
                .with_context(|| format!("read {}", rec.lyrics_path.display()))?;
            let start = Instant::now();
            let (_, t) = cascade.align_song_timed(&rec.id, rec.audio_ref(), &lyrics, &rec.language)?;
            total += start.elapsed();
            stages.text += t.text;
            stages.audio += t.audio;
            stages.sentence_model += t.sentence_model;
            stages.word_model += t.word_model;
            runs += 1;
        }
    }
    let mean = |d: Duration| d.as_secs_f64() / runs as f64;
    let values = [
        stages.text,
        stages.audio,
        stages.sentence_model,
        stages.word_model,
        total,
    ];
    let report = BenchReport {
        songs: records.len(),
        runs,
        rows: STAGES
            .iter()
            .zip(values)
            .map(|(s, d)| BenchRow {
                stage: (*s).to_string(),
                mean_sec: mean(d),
            })
            .collect(),
    };
    if let Some(out) = &cfg.out {
        std::fs::write(out, report.csv()).with_context(|| format!("write {}", out.display()))?;
    }
    Ok(report)
}
