use crate::error::{Error, Result};
use crate::model::AlignmentMatrix;
use std::collections::BTreeSet;

/// Supervised onset frames for some token rows of one training item.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainTarget {
    targets: Vec<(usize, usize)>,
    num_frames: usize,
}

impl TrainTarget {
    /// `targets` are `(token_index, frame_index)` pairs; token indices must be
    /// unique and frames inside `0..num_frames`.
    pub fn new(targets: Vec<(usize, usize)>, num_frames: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(row, frame) in &targets {
            if frame >= num_frames {
                return Err(Error::ShapeMismatch(format!(
                    "target frame {frame} outside 0..{num_frames}"
                )));
            }
            if !seen.insert(row) {
                return Err(Error::ShapeMismatch(format!("token {row} supervised twice")));
            }
        }
        Ok(Self { targets, num_frames })
    }

    pub fn targets(&self) -> &[(usize, usize)] {
        &self.targets
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Supervised token rows.
    pub fn mask(&self) -> BTreeSet<usize> {
        self.targets.iter().map(|t| t.0).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Mean over supervised rows of `-log softmax(logits[row])[frame]`.
pub fn alignment_loss(a: &AlignmentMatrix, target: &TrainTarget) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::NoSupervisedRows);
    }
    if a.num_frames() != target.num_frames {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} frames, target expects {}",
            a.num_frames(),
            target.num_frames
        )));
    }
    let logits = a.logits();
    let mut total = 0.0;
    for &(row, frame) in &target.targets {
        if row >= a.num_tokens() {
            return Err(Error::ShapeMismatch(format!("target row {row} outside matrix")));
        }
        let r = logits.row(row);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + r.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - r[frame];
    }
    Ok(total / target.targets.len() as f64)
}
