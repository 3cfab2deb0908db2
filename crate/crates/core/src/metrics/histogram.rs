use super::WordTiming;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Signed deviations binned uniformly over `[-range, range]`. Bins are
/// left-inclusive except the last, which also holds `+range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub range: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }

    /// Bin index for `d`, or `Err(true)` for overflow / `Err(false)` for underflow.
    pub fn index(range: f64, bins: usize, d: f64) -> std::result::Result<usize, bool> {
        if d < -range {
            return Err(false);
        }
        if d > range {
            return Err(true);
        }
        let width = 2.0 * range / bins as f64;
        let mut x = (d + range) / width;
        // Values that land on an edge up to rounding belong to the bin starting there.
        let nearest = x.round();
        if (x - nearest).abs() < 1e-9 * nearest.abs().max(1.0) {
            x = nearest;
        }
        Ok((x.floor() as usize).min(bins - 1))
    }
}

pub fn deviation_histogram(words: &[WordTiming], bins: usize, range: f64) -> Result<Histogram> {
    if words.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins == 0 || !(range > 0.0) {
        return Err(Error::InvalidConfig(format!("need bins >= 1 and range > 0, got {bins} and {range}")));
    }
    let width = 2.0 * range / bins as f64;
    let mut h = Histogram {
        range,
        edges: (0..=bins).map(|i| -range + i as f64 * width).collect(),
        counts: vec![0; bins],
        underflow: 0,
        overflow: 0,
    };
    for w in words {
        match Histogram::index(range, bins, w.deviation()) {
            Ok(i) => h.counts[i] += 1,
            Err(true) => h.overflow += 1,
            Err(false) => h.underflow += 1,
        }
    }
    Ok(h)
}
