use crate::error::{Error, Result};
use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Log-mel frames `[T, F]` with the timing metadata needed to map frame
/// indices back to seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFeatures {
    frames: Array2<f32>,
    sample_rate: u32,
    hop: usize,
    stack_factor: usize,
}

impl MelFeatures {
    pub fn new(frames: Array2<f32>, sample_rate: u32, hop: usize, stack_factor: usize) -> Result<Self> {
        if stack_factor == 0 || frames.ncols() % stack_factor != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} feature columns not divisible by stack factor {stack_factor}",
                frames.ncols()
            )));
        }
        if sample_rate == 0 || hop == 0 {
            return Err(Error::ShapeMismatch("sample rate and hop must be positive".into()));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite feature value".into()));
        }
        Ok(Self {
            frames,
            sample_rate,
            hop,
            stack_factor,
        })
    }

    pub fn frames(&self) -> ArrayView2<'_, f32> {
        self.frames.view()
    }

    pub fn into_frames(self) -> Array2<f32> {
        self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    /// Feature width `F` (mel bins × stack factor).
    pub fn width(&self) -> usize {
        self.frames.ncols()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.ncols() / self.stack_factor
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn stack_factor(&self) -> usize {
        self.stack_factor
    }

    pub fn seconds_per_frame(&self) -> f64 {
        (self.hop * self.stack_factor) as f64 / f64::from(self.sample_rate)
    }

    /// Time covered by the frames.
    pub fn duration_sec(&self) -> f64 {
        self.num_frames() as f64 * self.seconds_per_frame()
    }

    pub fn frame_to_seconds(&self, frame_index: usize) -> f64 {
        frame_index as f64 * self.seconds_per_frame()
    }

    /// Nearest frame index for a time, clamped to the valid range.
    pub fn seconds_to_frame(&self, seconds: f64) -> usize {
        let f = (seconds / self.seconds_per_frame()).round().max(0.0) as usize;
        f.min(self.num_frames().saturating_sub(1))
    }

    /// Frames `[start, end)` as new features with the same metadata.
    pub fn slice_frames(&self, start: usize, end: usize) -> MelFeatures {
        let end = end.min(self.num_frames());
        let start = start.min(end);
        MelFeatures {
            frames: self.frames.slice(s![start..end, ..]).to_owned(),
            sample_rate: self.sample_rate,
            hop: self.hop,
            stack_factor: self.stack_factor,
        }
    }

    pub(crate) fn frames_mut(&mut self) -> &mut Array2<f32> {
        &mut self.frames
    }
}

/// Free-function form of [`MelFeatures::frame_to_seconds`].
pub fn frame_to_seconds(frame_index: usize, features: &MelFeatures) -> f64 {
    features.frame_to_seconds(frame_index)
}

/// Concatenates `factor` consecutive frames along frequency. A trailing
/// partial group is completed by repeating the last frame.
pub fn stack_frames(features: &MelFeatures, factor: usize) -> Result<MelFeatures> {
    if features.stack_factor != 1 {
        return Err(Error::AlreadyStacked(features.stack_factor));
    }
    assert!(factor >= 1, "stack factor must be positive");
    let (t, f) = features.frames.dim();
    let out_t = t.div_ceil(factor);
    let mut out = Array2::<f32>::zeros((out_t, f * factor));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        for k in 0..factor {
            let src = (i * factor + k).min(t - 1);
            row.slice_mut(s![k * f..(k + 1) * f])
                .assign(&features.frames.row(src));
        }
    }
    Ok(MelFeatures {
        frames: out,
        sample_rate: features.sample_rate,
        hop: features.hop,
        stack_factor: factor,
    })
}

/// Inverse reshape of [`stack_frames`]: splits each row back into frames.
/// Padding frames added by stacking are kept.
pub fn unstack_frames(features: &MelFeatures) -> MelFeatures {
    let k = features.stack_factor;
    let (t, w) = features.frames.dim();
    let f = w / k;
    let frames = features
        .frames
        .as_standard_layout()
        .into_owned()
        .into_shape((t * k, f))
        .expect("row-major reshape");
    MelFeatures {
        frames,
        sample_rate: features.sample_rate,
        hop: features.hop,
        stack_factor: 1,
    }
}

/// Per-dimension mean/std normalisation statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureStats {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Accumulates over every frame of every item (in f64). A zero-variance
    /// dimension gets std 1.
    pub fn compute<'a>(items: impl IntoIterator<Item = &'a MelFeatures>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for item in items {
            if sum.is_empty() {
                sum = vec![0.0; item.width()];
                sq = vec![0.0; item.width()];
            } else if sum.len() != item.width() {
                return Err(Error::ShapeMismatch("feature widths differ across corpus".into()));
            }
            for row in item.frames.rows() {
                for (j, v) in row.iter().enumerate() {
                    let v = f64::from(*v);
                    sum[j] += v;
                    sq[j] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let nf = n as f64;
        let mean: Vec<f32> = sum.iter().map(|s| (s / nf) as f32).collect();
        let std = sum
            .iter()
            .zip(&sq)
            .map(|(s, q)| {
                let m = s / nf;
                let var = (q / nf - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt() as f32
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Normalised frames as row-major `f64`.
    pub fn apply(&self, frames: ArrayView2<'_, f32>) -> Vec<f64> {
        let mut out = Vec::with_capacity(frames.len());
        for row in frames.rows() {
            for (j, v) in row.iter().enumerate() {
                out.push((f64::from(*v) - f64::from(self.mean[j])) / f64::from(self.std[j]));
            }
        }
        out
    }

    /// Statistics for `factor`-stacked features built by tiling these.
    pub fn tiled(&self, factor: usize) -> Self {
        Self {
            mean: self.mean.repeat(factor),
            std: self.std.repeat(factor),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn feats(t: usize, f: usize) -> MelFeatures {
        let frames = Array::from_shape_fn((t, f), |(i, j)| (i * 100 + j) as f32);
        MelFeatures::new(frames, 16_000, 512, 1).unwrap()
    }

    #[test]
    fn stacking_eight_frames_is_invertible() {
        let f = feats(8, 80);
        let s = stack_frames(&f, 4).unwrap();
        assert_eq!(s.frames().dim(), (2, 320));
        assert_eq!(unstack_frames(&s), f);
    }

    #[test]
    fn stacking_ten_frames_repeats_the_last() {
        let f = feats(10, 80);
        let s = stack_frames(&f, 4).unwrap();
        assert_eq!(s.frames().dim(), (3, 320));
        let last = s.frames().row(2).to_owned();
        for k in 0..4 {
            let expected = if k == 0 { 8 } else { 9 };
            assert_eq!(
                last.slice(s![k * 80..(k + 1) * 80]),
                f.frames().row(expected),
                "slot {k}"
            );
        }
    }

    #[test]
    fn four_constant_frames_concatenate() {
        let frames = Array::from_shape_fn((4, 80), |(i, _)| i as f32 + 1.0);
        let f = MelFeatures::new(frames, 16_000, 512, 1).unwrap();
        let s = stack_frames(&f, 4).unwrap();
        assert_eq!(s.num_frames(), 1);
        let row = s.frames().row(0).to_vec();
        let expected: Vec<f32> = (1..=4).flat_map(|v| vec![v as f32; 80]).collect();
        assert_eq!(row, expected);
    }

    #[test]
    fn restacking_is_rejected() {
        let s = stack_frames(&feats(4, 80), 4).unwrap();
        assert!(matches!(stack_frames(&s, 4), Err(Error::AlreadyStacked(4))));
    }

    #[test]
    fn frame_times() {
        let f = feats(20, 80);
        assert_eq!(frame_to_seconds(0, &f), 0.0);
        assert!((frame_to_seconds(10, &f) - 0.320).abs() < 1e-12);
        let s = stack_frames(&f, 4).unwrap();
        assert!((frame_to_seconds(10, &s) - 1.280).abs() < 1e-12);
        assert_eq!(s.seconds_per_frame(), 4.0 * f.seconds_per_frame());
    }

    #[test]
    fn stats_normalise_to_zero_mean() {
        let f = feats(10, 3);
        let stats = FeatureStats::compute([&f]).unwrap();
        let normed = stats.apply(f.frames());
        let mean0: f64 = (0..10).map(|i| normed[i * 3]).sum::<f64>() / 10.0;
        assert!(mean0.abs() < 1e-9);
    }
}
