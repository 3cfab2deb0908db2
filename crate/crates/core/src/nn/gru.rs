//! Batched single-direction GRU with hand-written backpropagation through time.
//!
//! Gate layout follows the common `r, z, n` ordering:
//! `r = σ(x·Wr + h·Ur)`, `z = σ(x·Wz + h·Uz)`, `n = tanh(x·Wn + r ⊙ (h·Un))`,
//! `h' = (1 − z) ⊙ n + z ⊙ h` (each projection carrying its own bias).

use super::gemm::gemm;

#[derive(Debug)]
pub(crate) struct GruCache {
    batch: usize,
    steps: usize,
    hidden: usize,
    reverse: bool,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
}

pub(crate) struct GruWeights<'a> {
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_ih: &'a [f64],
    pub b_hh: &'a [f64],
}

pub(crate) struct GruGrads<'a> {
    pub x: &'a mut [f64],
    pub w_ih: &'a mut [f64],
    pub w_hh: &'a mut [f64],
    pub b_ih: &'a mut [f64],
    pub b_hh: &'a mut [f64],
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[inline]
fn time_index(step: usize, steps: usize, reverse: bool) -> usize {
    if reverse {
        steps - 1 - step
    } else {
        step
    }
}

/// Runs the recurrence over `x: [batch, steps, input]`, returning `[batch, steps, hidden]`.
pub(crate) fn forward(
    x: &[f64],
    (batch, steps, input, hidden): (usize, usize, usize, usize),
    wts: &GruWeights<'_>,
    reverse: bool,
) -> (Vec<f64>, GruCache) {
    let g3 = 3 * hidden;
    let mut xi = vec![0.0; batch * steps * g3];
    gemm(batch * steps, input, g3, x, false, wts.w_ih, false, 0.0, &mut xi);
    for row in xi.chunks_mut(g3) {
        for (v, b) in row.iter_mut().zip(wts.b_ih) {
            *v += b;
        }
    }

    let per_step = batch * hidden;
    let mut cache = GruCache {
        batch,
        steps,
        hidden,
        reverse,
        h_prev: vec![0.0; steps * per_step],
        r: vec![0.0; steps * per_step],
        z: vec![0.0; steps * per_step],
        n: vec![0.0; steps * per_step],
        hn: vec![0.0; steps * per_step],
    };
    let mut out = vec![0.0; batch * steps * hidden];
    let mut state = vec![0.0; per_step];
    let mut hh = vec![0.0; batch * g3];

    for step in 0..steps {
        let tt = time_index(step, steps, reverse);
        gemm(batch, hidden, g3, &state, false, wts.w_hh, false, 0.0, &mut hh);
        let base = step * per_step;
        cache.h_prev[base..base + per_step].copy_from_slice(&state);
        for bi in 0..batch {
            let xrow = &xi[(bi * steps + tt) * g3..(bi * steps + tt + 1) * g3];
            let hrow = &hh[bi * g3..(bi + 1) * g3];
            for j in 0..hidden {
                let r = sigmoid(xrow[j] + hrow[j] + wts.b_hh[j]);
                let z = sigmoid(xrow[hidden + j] + hrow[hidden + j] + wts.b_hh[hidden + j]);
                let hn = hrow[2 * hidden + j] + wts.b_hh[2 * hidden + j];
                let n = (xrow[2 * hidden + j] + r * hn).tanh();
                let idx = bi * hidden + j;
                let h_new = (1.0 - z) * n + z * state[idx];
                cache.r[base + idx] = r;
                cache.z[base + idx] = z;
                cache.n[base + idx] = n;
                cache.hn[base + idx] = hn;
                state[idx] = h_new;
                out[(bi * steps + tt) * hidden + j] = h_new;
            }
        }
    }
    (out, cache)
}

/// Accumulates gradients for a [`forward`] call given `dout: [batch, steps, hidden]`.
pub(crate) fn backward(
    x: &[f64],
    input: usize,
    dout: &[f64],
    cache: &GruCache,
    wts: &GruWeights<'_>,
    grads: GruGrads<'_>,
) {
    let GruCache {
        batch,
        steps,
        hidden,
        reverse,
        ..
    } = *cache;
    let g3 = 3 * hidden;
    let per_step = batch * hidden;
    let mut dxi = vec![0.0; batch * steps * g3];
    let mut dh = vec![0.0; per_step];
    let mut dhh = vec![0.0; batch * g3];
    let mut dh_next = vec![0.0; per_step];

    for step in (0..steps).rev() {
        let tt = time_index(step, steps, reverse);
        let base = step * per_step;
        for bi in 0..batch {
            for j in 0..hidden {
                dh[bi * hidden + j] += dout[(bi * steps + tt) * hidden + j];
            }
        }
        for bi in 0..batch {
            let dxrow = &mut dxi[(bi * steps + tt) * g3..(bi * steps + tt + 1) * g3];
            let dhrow = &mut dhh[bi * g3..(bi + 1) * g3];
            for j in 0..hidden {
                let idx = bi * hidden + j;
                let (r, z, n, hn) = (
                    cache.r[base + idx],
                    cache.z[base + idx],
                    cache.n[base + idx],
                    cache.hn[base + idx],
                );
                let hp = cache.h_prev[base + idx];
                let d = dh[idx];
                let dn_pre = d * (1.0 - z) * (1.0 - n * n);
                let dz_pre = d * (hp - n) * z * (1.0 - z);
                let dr_pre = dn_pre * hn * r * (1.0 - r);
                dxrow[j] = dr_pre;
                dxrow[hidden + j] = dz_pre;
                dxrow[2 * hidden + j] = dn_pre;
                dhrow[j] = dr_pre;
                dhrow[hidden + j] = dz_pre;
                dhrow[2 * hidden + j] = dn_pre * r;
                dh_next[idx] = d * z;
            }
        }
        let h_prev = &cache.h_prev[base..base + per_step];
        gemm(hidden, batch, g3, h_prev, true, &dhh, false, 1.0, grads.w_hh);
        for row in dhh.chunks(g3) {
            for (acc, v) in grads.b_hh.iter_mut().zip(row) {
                *acc += v;
            }
        }
        gemm(batch, g3, hidden, &dhh, false, wts.w_hh, true, 1.0, &mut dh_next);
        std::mem::swap(&mut dh, &mut dh_next);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
    }

    let rows = batch * steps;
    gemm(input, rows, g3, x, true, &dxi, false, 1.0, grads.w_ih);
    for row in dxi.chunks(g3) {
        for (acc, v) in grads.b_ih.iter_mut().zip(row) {
            *acc += v;
        }
    }
    gemm(rows, g3, input, &dxi, false, wts.w_ih, true, 1.0, grads.x);
}
