use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

/// Largest heatmap side sent to clients.
pub const MAX_SIDE: usize = 512;

/// A max-pooled probability matrix. Cell `(i, j)` covers source rows
/// `i*pool_rows ..` and columns `j*pool_cols ..`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub source_rows: usize,
    pub source_cols: usize,
    pub pool_rows: usize,
    pub pool_cols: usize,
    /// Seconds covered by one source column.
    pub seconds_per_frame: f64,
    /// Row-major, `rows × cols`.
    pub values: Vec<f32>,
}

/// Max-pools `probs` with the smallest integer pool that brings both sides
/// to at most `max_side`.
pub fn max_pool(probs: ArrayView2<'_, f32>, max_side: usize, seconds_per_frame: f64) -> Heatmap {
    let (l, t) = probs.dim();
    let pool = |n: usize| n.div_ceil(max_side).max(1);
    let (pr, pc) = (pool(l), pool(t));
    let (rows, cols) = (l.div_ceil(pr), t.div_ceil(pc));
    let mut values = vec![f32::NEG_INFINITY; rows * cols];
    for ((i, j), &v) in probs.indexed_iter() {
        let cell = &mut values[(i / pr) * cols + j / pc];
        if v > *cell {
            *cell = v;
        }
    }
    Heatmap {
        rows,
        cols,
        source_rows: l,
        source_cols: t,
        pool_rows: pr,
        pool_cols: pc,
        seconds_per_frame,
        values,
    }
}
