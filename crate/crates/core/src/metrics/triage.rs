use super::WordTiming;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Accept/reject decisions cross-tabulated against correctness. Values may
/// be counts or rates; the derived scores are the same either way.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    /// Accepted and correct.
    pub tp: f64,
    /// Accepted but wrong.
    pub fp: f64,
    /// Rejected and wrong.
    pub tn: f64,
    /// Rejected but correct.
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl Confusion {
    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0.0).then(|| self.tp / d)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0.0).then(|| self.tp / d)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }

    /// The same table scaled to sum to one.
    pub fn rates(&self) -> Confusion {
        let n = self.total();
        if n == 0.0 {
            return *self;
        }
        Confusion {
            tp: self.tp / n,
            fp: self.fp / n,
            tn: self.tn / n,
            fn_: self.fn_ / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageRow {
    pub threshold: f64,
    pub counts: Confusion,
    pub rates: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accepted: usize,
    /// MAE over accepted words; absent when nothing is accepted.
    pub accepted_mae: Option<f64>,
}

/// For each threshold `h`: accept words with confidence ≥ h, call a word
/// correct when its absolute deviation is below `true_bound`.
pub fn triage_sweep(words: &[WordTiming], true_bound: f64, thresholds: &[f64]) -> Result<Vec<TriageRow>> {
    if words.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(true_bound > 0.0) {
        return Err(Error::InvalidConfig(format!("true bound must be positive, got {true_bound}")));
    }
    let abs: Vec<f64> = words.iter().map(|w| w.deviation().abs()).collect();
    Ok(thresholds
        .iter()
        .map(|&h| {
            let decisions: Vec<bool> = words.iter().map(|w| w.confidence >= h).collect();
            let c = tabulate(words, &decisions, true_bound);
            let accepted = decisions.iter().filter(|&&d| d).count();
            let abs_sum: f64 = abs.iter().zip(&decisions).filter(|(_, &d)| d).map(|(a, _)| a).sum();
            TriageRow {
                threshold: h,
                counts: c,
                rates: c.rates(),
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
                accepted,
                accepted_mae: (accepted > 0).then(|| abs_sum / accepted as f64),
            }
        })
        .collect())
}

/// Counts for an arbitrary accept/reject decision per word; a word is correct
/// when its absolute deviation is below `true_bound`.
pub fn tabulate(words: &[WordTiming], accepted: &[bool], true_bound: f64) -> Confusion {
    let mut c = Confusion::default();
    for (w, &acc) in words.iter().zip(accepted) {
        let correct = w.deviation().abs() < true_bound;
        match (acc, correct) {
            (true, true) => c.tp += 1.0,
            (true, false) => c.fp += 1.0,
            (false, true) => c.fn_ += 1.0,
            (false, false) => c.tn += 1.0,
        }
    }
    c
}

/// Indices of the `round(fraction · n)` lowest-confidence items; ties are
/// broken by ascending id. Returned in ascending index order.
pub fn lowest_confidence<S: AsRef<str>>(items: &[(S, f64)], fraction: f64) -> Vec<usize> {
    let n = items.len();
    let k = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        items[a]
            .1
            .total_cmp(&items[b].1)
            .then_with(|| items[a].0.as_ref().cmp(items[b].0.as_ref()))
    });
    let mut picked: Vec<usize> = order.into_iter().take(k).collect();
    picked.sort_unstable();
    picked
}
