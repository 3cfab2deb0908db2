use super::{deviation_histogram, mae, mauch, medae, perc, triage_sweep, Histogram, TriageRow, WordTiming};
use crate::cascade::SongAlignment;
use crate::datasets::Labels;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One song's words and its duration.
#[derive(Clone, Debug, PartialEq)]
pub struct SongEval {
    pub song_id: String,
    pub words: Vec<WordTiming>,
    pub duration_sec: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SongMetrics {
    pub mae: f64,
    pub medae: f64,
    pub perc: f64,
    /// Keyed by τ formatted as in the request (e.g. "0.2").
    pub mauch: BTreeMap<String, f64>,
    pub n_words: usize,
}

/// Unweighted means of the per-song metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mae: f64,
    pub medae: f64,
    pub perc: f64,
    pub mauch: BTreeMap<String, f64>,
    pub n_songs: usize,
    pub n_words: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_song: BTreeMap<String, SongMetrics>,
    pub aggregate: Aggregate,
    pub histogram: Histogram,
    pub triage: Vec<TriageRow>,
}

pub(crate) fn tau_key(tau: f64) -> String {
    format!("{tau}")
}

/// Pairs predicted word onsets with reference onsets by position.
pub fn word_timings(pred: &SongAlignment, reference: &Labels) -> Result<Vec<WordTiming>> {
    let refs = reference
        .words
        .as_ref()
        .ok_or_else(|| Error::DataLevelMismatch(format!("{}: reference has no word onsets", pred.song_id)))?;
    if refs.len() != pred.words.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} predicted words vs {} reference words",
            pred.song_id,
            pred.words.len(),
            refs.len()
        )));
    }
    Ok(pred
        .words
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(i, (p, r))| WordTiming::new(i, r.start_sec, p.onset_sec, p.confidence))
        .collect())
}

fn song_metrics(song: &SongEval, taus: &[f64]) -> Result<SongMetrics> {
    let mut m = BTreeMap::new();
    for &tau in taus {
        m.insert(tau_key(tau), mauch(&song.words, tau)?);
    }
    Ok(SongMetrics {
        mae: mae(&song.words)?,
        medae: medae(&song.words)?,
        perc: perc(&song.words, song.duration_sec)?,
        mauch: m,
        n_words: song.words.len(),
    })
}

/// Per-song metrics, their unweighted means, and pooled histogram/triage.
pub fn evaluate(
    songs: &[SongEval],
    taus: &[f64],
    true_bound: f64,
    thresholds: &[f64],
    bins: usize,
    range: f64,
    exec: Exec,
) -> Result<MetricsReport> {
    if songs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per: Vec<SongMetrics> = par::map(exec, songs, |s| {
        song_metrics(s, taus).map_err(|e| match e {
            Error::EmptySong => Error::ShapeMismatch(format!("{}: no words", s.song_id)),
            other => other,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = |f: &dyn Fn(&SongMetrics) -> f64| per.iter().map(f).sum::<f64>() / n;
    let aggregate = Aggregate {
        mae: mean(&|m| m.mae),
        medae: mean(&|m| m.medae),
        perc: mean(&|m| m.perc),
        mauch: taus
            .iter()
            .map(|&t| (tau_key(t), mean(&|m| m.mauch[&tau_key(t)])))
            .collect(),
        n_songs: per.len(),
        n_words: per.iter().map(|m| m.n_words).sum(),
    };
    let pooled: Vec<WordTiming> = songs.iter().flat_map(|s| s.words.iter().copied()).collect();
    Ok(MetricsReport {
        per_song: songs.iter().map(|s| s.song_id.clone()).zip(per).collect(),
        aggregate,
        histogram: deviation_histogram(&pooled, bins, range)?,
        triage: triage_sweep(&pooled, true_bound, thresholds)?,
    })
}
