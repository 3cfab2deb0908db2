//! The alignment network and its inference entry points.

mod config;
pub(crate) mod net;
mod weights;

pub use config::{Level, ModelConfig};
pub use weights::AlignerWeights;

use crate::audio::MelFeatures;
use crate::error::{Error, Result};
use crate::nn::{cross_correlate_raw, Graph, Tensor};
use ndarray::{Array2, Array3, ArrayView2};
use serde::Serialize;

/// Row-wise logits and softmax probabilities over audio frames, `[L, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentMatrix {
    logits: Array2<f64>,
    probs: Array2<f64>,
}

impl AlignmentMatrix {
    pub fn from_logits(logits: Array2<f64>) -> Self {
        let mut probs = logits.clone();
        for mut row in probs.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        Self { logits, probs }
    }

    pub fn logits(&self) -> ArrayView2<'_, f64> {
        self.logits.view()
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn num_tokens(&self) -> usize {
        self.logits.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.logits.ncols()
    }

    /// Most probable frame for a token row; ties go to the earliest frame.
    pub fn argmax(&self, row: usize) -> usize {
        let mut best = 0;
        let r = self.logits.row(row);
        for (j, v) in r.iter().enumerate() {
            if *v > r[best] {
                best = j;
            }
        }
        best
    }

    /// Peak probability of a token row.
    pub fn confidence(&self, row: usize) -> f64 {
        self.probs.row(row).iter().copied().fold(0.0, f64::max)
    }
}

/// An onset read off one row of an alignment matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecodedOnset {
    pub token_index: usize,
    pub frame: usize,
    pub onset_sec: f64,
    pub confidence: f64,
}

fn check_tokens(tokens: &[usize], cfg: &ModelConfig) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::InputTooShort("no tokens".into()));
    }
    if let Some(&id) = tokens.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Validates features against the model and normalises them into `[T, F]`.
pub(crate) fn prepare_frames(features: &MelFeatures, weights: &AlignerWeights) -> Result<Tensor> {
    let cfg = &weights.config;
    if features.stack_factor() != cfg.level.stack_factor() {
        return Err(Error::StackFactorMismatch {
            expected: cfg.level.stack_factor(),
            actual: features.stack_factor(),
        });
    }
    if features.width() != cfg.n_mels_effective {
        return Err(Error::ShapeMismatch(format!(
            "expected {} feature columns, got {}",
            cfg.n_mels_effective,
            features.width()
        )));
    }
    if features.num_frames() == 0 {
        return Err(Error::InputTooShort("no audio frames".into()));
    }
    let data = weights.stats.apply(features.frames());
    Ok(Tensor::from_vec(&[features.num_frames(), features.width()], data))
}

/// `[N, C_in * C_enc]` row-major to `[C_in, C_enc, N]`.
fn split_channels(t: &Tensor, c_in: usize) -> Array3<f64> {
    let (n, w) = (t.rows(), t.last_dim());
    let ce = w / c_in;
    Array3::from_shape_fn((c_in, ce, n), |(c, k, i)| t.data()[i * w + c * ce + k])
}

fn merge_channels(a: &Array3<f64>) -> Vec<f64> {
    let (c_in, ce, n) = a.dim();
    let mut out = vec![0.0; n * c_in * ce];
    for ((c, k, i), v) in a.indexed_iter() {
        out[i * c_in * ce + c * ce + k] = *v;
    }
    out
}

/// Token features `[C_in, C_enc, L]`.
pub fn encode_text(tokens: &[usize], weights: &AlignerWeights) -> Result<Array3<f64>> {
    check_tokens(tokens, &weights.config)?;
    let mut g = Graph::new(&weights.params);
    let v = net::text_encoder(&mut g, tokens, &weights.config);
    Ok(split_channels(g.value(v), weights.config.c_in))
}

/// Frame features `[C_in, C_enc, T]`.
pub fn encode_audio(features: &MelFeatures, weights: &AlignerWeights) -> Result<Array3<f64>> {
    let frames = prepare_frames(features, weights)?;
    let mut g = Graph::new(&weights.params);
    let v = net::audio_encoder(&mut g, frames, &weights.config);
    Ok(split_channels(g.value(v), weights.config.c_in))
}

/// `M[c, l, t] = Σ_k text[c, k, l] · audio[c, k, t]`, shape `[C_in, L, T]`.
pub fn cross_correlate(text: &Array3<f64>, audio: &Array3<f64>) -> Result<Array3<f64>> {
    let ((tc, tk, l), (ac, ak, t)) = (text.dim(), audio.dim());
    if tc != ac || tk != ak {
        return Err(Error::ShapeMismatch(format!(
            "text features [{tc}, {tk}, _] vs audio features [{ac}, {ak}, _]"
        )));
    }
    let raw = cross_correlate_raw(&merge_channels(text), &merge_channels(audio), l, t, tc * tk, tc);
    Ok(Array3::from_shape_vec((tc, l, t), raw).expect("cross-correlation shape"))
}

/// Runs the UNet on a cross-correlation volume.
pub fn predict_alignment(m: &Array3<f64>, weights: &AlignerWeights) -> Result<AlignmentMatrix> {
    let (c, l, t) = m.dim();
    if c != weights.config.c_in {
        return Err(Error::ShapeMismatch(format!(
            "volume has {c} channels, model expects {}",
            weights.config.c_in
        )));
    }
    if l == 0 || t == 0 {
        return Err(Error::InputTooShort(format!("empty {l}x{t} volume")));
    }
    let mut g = Graph::new(&weights.params);
    let data = m.iter().copied().collect();
    let v = g.input(Tensor::from_vec(&[c, l, t], data));
    let out = net::unet(&mut g, v, &weights.config);
    Ok(to_matrix(g.value(out)))
}

fn to_matrix(t: &Tensor) -> AlignmentMatrix {
    let s = t.shape();
    AlignmentMatrix::from_logits(
        Array2::from_shape_vec((s[0], s[1]), t.data().to_vec()).expect("logit shape"),
    )
}

/// End-to-end alignment of a token sequence against audio features.
pub fn align(tokens: &[usize], features: &MelFeatures, weights: &AlignerWeights) -> Result<AlignmentMatrix> {
    check_tokens(tokens, &weights.config)?;
    let frames = prepare_frames(features, weights)?;
    let mut g = Graph::new(&weights.params);
    let out = net::forward(&mut g, tokens, frames, &weights.config);
    Ok(to_matrix(g.value(out)))
}

/// Argmax onsets for the given token rows.
pub fn decode_onsets(
    matrix: &AlignmentMatrix,
    rows: &[usize],
    features: &MelFeatures,
) -> Result<Vec<DecodedOnset>> {
    if matrix.num_frames() != features.num_frames() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} frames, features have {}",
            matrix.num_frames(),
            features.num_frames()
        )));
    }
    rows.iter()
        .map(|&row| {
            if row >= matrix.num_tokens() {
                return Err(Error::ShapeMismatch(format!("row {row} out of range")));
            }
            let frame = matrix.argmax(row);
            Ok(DecodedOnset {
                token_index: row,
                frame,
                onset_sec: features.frame_to_seconds(frame),
                confidence: matrix.confidence(row),
            })
        })
        .collect()
}

/// Element-wise mean of logits across models.
pub fn ensemble_logits(members: &[AlignmentMatrix]) -> Result<AlignmentMatrix> {
    let first = members.first().ok_or(Error::EmptyEnsemble)?;
    let mut sum = Array2::<f64>::zeros(first.logits.dim());
    for m in members {
        if m.logits.dim() != first.logits.dim() {
            return Err(Error::ShapeMismatch("ensemble members differ in shape".into()));
        }
        sum += &m.logits;
    }
    Ok(AlignmentMatrix::from_logits(sum / members.len() as f64))
}

#[cfg(test)]
mod tests;
