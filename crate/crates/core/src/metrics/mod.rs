//! Onset-accuracy metrics, deviation histograms and confidence triage.

mod histogram;
mod report;
mod triage;

pub use histogram::{deviation_histogram, Histogram};
pub use report::{evaluate, word_timings, Aggregate, MetricsReport, SongEval, SongMetrics};
pub use triage::{lowest_confidence, tabulate, triage_sweep, Confusion, TriageRow};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Assumed length of the final word when no successor defines its end.
pub const LAST_WORD_SEC: f64 = 0.5;

/// Reference and predicted timing for one word.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordTiming {
    pub word_index: usize,
    pub t_ref: f64,
    pub t_pred: f64,
    /// Explicit end times; when absent the next word's onset is used.
    pub e_ref: Option<f64>,
    pub e_pred: Option<f64>,
    pub confidence: f64,
}

impl WordTiming {
    pub fn new(word_index: usize, t_ref: f64, t_pred: f64, confidence: f64) -> Self {
        Self {
            word_index,
            t_ref,
            t_pred,
            e_ref: None,
            e_pred: None,
            confidence,
        }
    }

    pub fn deviation(&self) -> f64 {
        self.t_pred - self.t_ref
    }
}

fn nonempty(words: &[WordTiming]) -> Result<()> {
    if words.is_empty() {
        Err(Error::EmptySong)
    } else {
        Ok(())
    }
}

/// Mean absolute onset deviation.
pub fn mae(words: &[WordTiming]) -> Result<f64> {
    nonempty(words)?;
    Ok(words.iter().map(|w| w.deviation().abs()).sum::<f64>() / words.len() as f64)
}

/// Median absolute onset deviation; an even count averages the central pair.
pub fn medae(words: &[WordTiming]) -> Result<f64> {
    nonempty(words)?;
    let mut d: Vec<f64> = words.iter().map(|w| w.deviation().abs()).collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Ok(if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) / 2.0
    })
}

/// End times for each word: explicit if given, else the next word's onset,
/// and for the last word `t + LAST_WORD_SEC` capped at `duration`.
fn ends(words: &[WordTiming], duration: f64, pick: impl Fn(&WordTiming) -> (f64, Option<f64>)) -> Vec<f64> {
    (0..words.len())
        .map(|i| {
            let (t, e) = pick(&words[i]);
            match (e, words.get(i + 1)) {
                (Some(e), _) => e,
                (None, Some(next)) => pick(next).0,
                (None, None) => (t + LAST_WORD_SEC).min(duration),
            }
        })
        .collect()
}

/// Fraction of the song's duration where predicted and reference word
/// intervals overlap.
pub fn perc(words: &[WordTiming], duration: f64) -> Result<f64> {
    nonempty(words)?;
    if !(duration > 0.0) {
        return Err(Error::NonpositiveDuration(duration));
    }
    let e_ref = ends(words, duration, |w| (w.t_ref, w.e_ref));
    let e_pred = ends(words, duration, |w| (w.t_pred, w.e_pred));
    let overlap: f64 = words
        .iter()
        .enumerate()
        .map(|(i, w)| (e_ref[i].min(e_pred[i]) - w.t_ref.max(w.t_pred)).max(0.0))
        .sum();
    Ok(overlap / duration)
}

/// Fraction of words whose absolute deviation is strictly below `tau`.
pub fn mauch(words: &[WordTiming], tau: f64) -> Result<f64> {
    nonempty(words)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    let hits = words.iter().filter(|w| w.deviation().abs() < tau).count();
    Ok(hits as f64 / words.len() as f64)
}
