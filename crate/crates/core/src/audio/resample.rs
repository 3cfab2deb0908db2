//! Band-limited resampling by Hann-windowed sinc interpolation.

const HALF_TAPS: f64 = 16.0;

pub fn resample(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }
    let ratio = f64::from(to_rate) / f64::from(from_rate);
    let cutoff = ratio.min(1.0);
    let half_width = HALF_TAPS / cutoff;
    let out_len = ((input.len() as f64) * ratio).round().max(1.0) as usize;
    (0..out_len)
        .map(|n| {
            let center = n as f64 / ratio;
            let lo = (center - half_width).ceil().max(0.0) as usize;
            let hi = ((center + half_width).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0;
            for (k, x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = center - k as f64;
                let w = 0.5 + 0.5 * (std::f64::consts::PI * d / half_width).cos();
                acc += f64::from(*x) * cutoff * sinc(cutoff * d) * w;
            }
            acc as f32
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsampling_preserves_a_low_tone() {
        let from = 44_100;
        let input: Vec<f32> = (0..from)
            .map(|i| (2.0 * std::f64::consts::PI * 300.0 * i as f64 / from as f64).sin() as f32)
            .collect();
        let out = resample(&input, from, 16_000);
        assert_eq!(out.len(), 16_000);
        for (i, v) in out.iter().enumerate().skip(200).take(1000) {
            let expected = (2.0 * std::f64::consts::PI * 300.0 * i as f64 / 16_000.0).sin();
            assert!((f64::from(*v) - expected).abs() < 0.02, "sample {i}");
        }
    }

    #[test]
    fn identity_rate_is_a_copy() {
        assert_eq!(resample(&[1.0, 2.0], 8000, 8000), vec![1.0, 2.0]);
    }
}
