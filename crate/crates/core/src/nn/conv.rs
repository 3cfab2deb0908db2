//! Convolution, pooling and padding kernels on channels-last buffers.

/// Unfolds `x: [T, C]` into `[T, K*C]` patches for a same-length 1-D convolution.
pub(crate) fn im2col_1d(x: &[f64], t: usize, c: usize, k: usize, pad_left: usize) -> Vec<f64> {
    let mut cols = vec![0.0; t * k * c];
    for pos in 0..t {
        let row = &mut cols[pos * k * c..(pos + 1) * k * c];
        for tap in 0..k {
            let src = pos as isize + tap as isize - pad_left as isize;
            if src < 0 || src >= t as isize {
                continue;
            }
            let src = src as usize;
            row[tap * c..(tap + 1) * c].copy_from_slice(&x[src * c..(src + 1) * c]);
        }
    }
    cols
}

pub(crate) fn col2im_1d_add(
    dcols: &[f64],
    t: usize,
    c: usize,
    k: usize,
    pad_left: usize,
    dx: &mut [f64],
) {
    for pos in 0..t {
        let row = &dcols[pos * k * c..(pos + 1) * k * c];
        for tap in 0..k {
            let src = pos as isize + tap as isize - pad_left as isize;
            if src < 0 || src >= t as isize {
                continue;
            }
            let src = src as usize;
            for (d, g) in dx[src * c..(src + 1) * c]
                .iter_mut()
                .zip(&row[tap * c..(tap + 1) * c])
            {
                *d += g;
            }
        }
    }
}

/// Unfolds `x: [H, W, C]` into `[H*W, k*k*C]` patches (zero padding, odd `k`).
pub(crate) fn im2col_2d(x: &[f64], h: usize, w: usize, c: usize, k: usize) -> Vec<f64> {
    let half = (k / 2) as isize;
    let patch = k * k * c;
    let mut cols = vec![0.0; h * w * patch];
    for i in 0..h {
        for j in 0..w {
            let row = &mut cols[(i * w + j) * patch..(i * w + j + 1) * patch];
            for di in 0..k {
                let si = i as isize + di as isize - half;
                if si < 0 || si >= h as isize {
                    continue;
                }
                for dj in 0..k {
                    let sj = j as isize + dj as isize - half;
                    if sj < 0 || sj >= w as isize {
                        continue;
                    }
                    let src = (si as usize * w + sj as usize) * c;
                    let dst = (di * k + dj) * c;
                    row[dst..dst + c].copy_from_slice(&x[src..src + c]);
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im_2d_add(
    dcols: &[f64],
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    dx: &mut [f64],
) {
    let half = (k / 2) as isize;
    let patch = k * k * c;
    for i in 0..h {
        for j in 0..w {
            let row = &dcols[(i * w + j) * patch..(i * w + j + 1) * patch];
            for di in 0..k {
                let si = i as isize + di as isize - half;
                if si < 0 || si >= h as isize {
                    continue;
                }
                for dj in 0..k {
                    let sj = j as isize + dj as isize - half;
                    if sj < 0 || sj >= w as isize {
                        continue;
                    }
                    let src = (si as usize * w + sj as usize) * c;
                    let off = (di * k + dj) * c;
                    for (d, g) in dx[src..src + c].iter_mut().zip(&row[off..off + c]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

/// Width-2, stride-1 max pool along time; the last frame pairs with itself.
pub(crate) fn maxpool1d(x: &[f64], t: usize, c: usize) -> (Vec<f64>, Vec<usize>) {
    let mut y = vec![0.0; t * c];
    let mut arg = vec![0; t * c];
    for pos in 0..t {
        let next = (pos + 1).min(t - 1);
        for ch in 0..c {
            let a = pos * c + ch;
            let b = next * c + ch;
            let (src, v) = if x[b] > x[a] { (b, x[b]) } else { (a, x[a]) };
            y[a] = v;
            arg[a] = src;
        }
    }
    (y, arg)
}

/// 2×2 stride-2 max pool on `[H, W, C]` with even `H` and `W`.
pub(crate) fn maxpool2d(x: &[f64], h: usize, w: usize, c: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = vec![0.0; oh * ow * c];
    let mut arg = vec![0; oh * ow * c];
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best = (2 * i * w + 2 * j) * c + ch;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * i + di) * w + 2 * j + dj) * c + ch;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let o = (i * ow + j) * c + ch;
                y[o] = x[best];
                arg[o] = best;
            }
        }
    }
    (y, arg)
}

/// Index of position `i` in a length-`n` axis under mirror reflection
/// (edge sample not repeated). Length-1 axes replicate.
pub fn reflect_index(i: usize, n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Scatters the 2×2 transposed-convolution products `[H*W, 4*Co]` into `[2H, 2W, Co]`.
pub(crate) fn upconv_scatter(prod: &[f64], h: usize, w: usize, co: usize, bias: &[f64]) -> Vec<f64> {
    let ow = 2 * w;
    let mut y = vec![0.0; 4 * h * w * co];
    for i in 0..h {
        for j in 0..w {
            let src = &prod[(i * w + j) * 4 * co..(i * w + j + 1) * 4 * co];
            for a in 0..2 {
                for b in 0..2 {
                    let dst = ((2 * i + a) * ow + 2 * j + b) * co;
                    let blk = &src[(a * 2 + b) * co..(a * 2 + b + 1) * co];
                    for o in 0..co {
                        y[dst + o] = blk[o] + bias[o];
                    }
                }
            }
        }
    }
    y
}

/// Inverse of [`upconv_scatter`] for gradients: gathers `[2H, 2W, Co]` into `[H*W, 4*Co]`.
pub(crate) fn upconv_gather(g: &[f64], h: usize, w: usize, co: usize) -> Vec<f64> {
    let ow = 2 * w;
    let mut out = vec![0.0; 4 * h * w * co];
    for i in 0..h {
        for j in 0..w {
            let dst = &mut out[(i * w + j) * 4 * co..(i * w + j + 1) * 4 * co];
            for a in 0..2 {
                for b in 0..2 {
                    let src = ((2 * i + a) * ow + 2 * j + b) * co;
                    dst[(a * 2 + b) * co..(a * 2 + b + 1) * co].copy_from_slice(&g[src..src + co]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_mirrors_without_repeating_edges() {
        let got: Vec<usize> = (0..9).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect_index(5, 1), 0);
    }

    #[test]
    fn maxpool1d_pairs_last_frame_with_itself() {
        let x = [1.0, 5.0, 3.0, 2.0];
        let (y, arg) = maxpool1d(&x, 4, 1);
        assert_eq!(y, vec![5.0, 5.0, 3.0, 2.0]);
        assert_eq!(arg, vec![1, 1, 2, 3]);
    }

    #[test]
    fn im2col_2d_center_tap_is_identity() {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let cols = im2col_2d(&x, 2, 3, 2, 3);
        for pos in 0..6 {
            let center = &cols[pos * 18 + 8..pos * 18 + 10];
            assert_eq!(center, &x[pos * 2..pos * 2 + 2]);
        }
    }
}
