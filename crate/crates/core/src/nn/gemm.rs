//! Thin safe wrappers over `matrixmultiply::dgemm`.

/// Row/column strides of a matrix operand.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Strides {
    pub row: isize,
    pub col: isize,
}

impl Strides {
    /// Row-major `rows × cols` storage, optionally read transposed.
    pub fn dense(cols_in_storage: usize, transposed: bool) -> Self {
        let ld = cols_in_storage as isize;
        if transposed {
            Self { row: 1, col: ld }
        } else {
            Self { row: ld, col: 1 }
        }
    }
}

/// `c = a·b + beta·c` for an `m×k` times `k×n` product with arbitrary strides.
///
/// The caller guarantees the strided views stay inside the given slices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: Strides,
    b: &[f64],
    sb: Strides,
    beta: f64,
    c: &mut [f64],
    sc: Strides,
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, s: Strides| {
        (rows.saturating_sub(1) as isize * s.row + cols.saturating_sub(1) as isize * s.col) as usize
    };
    if k > 0 {
        assert!(extent(m, k, sa) < a.len(), "gemm: a out of bounds");
        assert!(extent(k, n, sb) < b.len(), "gemm: b out of bounds");
    }
    assert!(extent(m, n, sc) < c.len(), "gemm: c out of bounds");
    // SAFETY: bounds of all three strided views were checked above and the
    // output slice is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.row,
            sa.col,
            b.as_ptr(),
            sb.row,
            sb.col,
            beta,
            c.as_mut_ptr(),
            sc.row,
            sc.col,
        );
    }
}

/// Dense row-major product `c (m×n) = op(a) · op(b) + beta·c`.
///
/// `a` is stored as `m×k` (or `k×m` when `ta`), `b` as `k×n` (or `n×k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    let sa = Strides::dense(if ta { m } else { k }, ta);
    let sb = Strides::dense(if tb { k } else { n }, tb);
    gemm_strided(m, k, n, a, sa, b, sb, beta, c, Strides::dense(n, false));
}
