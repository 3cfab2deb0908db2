use crate::error::{Error, IoContext, Result};
use crate::model::AlignmentMatrix;
use ndarray::Array2;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"LYAM";
const VERSION: u32 = 1;

/// A saved probability matrix `[L, T]` and the duration of one column.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedMatrix {
    pub probs: Array2<f32>,
    pub seconds_per_frame: f64,
}

/// Where the sentence-level matrix of an alignment file is kept.
pub fn matrix_path_for(alignment_path: &Path) -> PathBuf {
    alignment_path.with_extension("lyam")
}

/// Layout (little endian): magic `LYAM`, version u32, rows u64, cols u64,
/// seconds per frame f64, then `rows × cols` f32 probabilities row-major.
pub fn save_matrix(path: &Path, matrix: &AlignmentMatrix, seconds_per_frame: f64) -> Result<()> {
    let (rows, cols) = matrix.probs().dim();
    let mut buf = Vec::with_capacity(32 + rows * cols * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows as u64).to_le_bytes());
    buf.extend_from_slice(&(cols as u64).to_le_bytes());
    buf.extend_from_slice(&seconds_per_frame.to_le_bytes());
    for v in matrix.probs().iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, buf).io_context(|| format!("write {}", path.display()))
}

pub fn load_matrix(path: &Path) -> Result<SavedMatrix> {
    let bytes = std::fs::read(path).io_context(|| format!("read {}", path.display()))?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 32 || &bytes[..4] != MAGIC {
        return Err(bad("not an alignment matrix file"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(bad("unsupported version"));
    }
    let (rows, cols) = (u64_at(8) as usize, u64_at(16) as usize);
    let spf = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let n = rows.checked_mul(cols).ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != 32 + n * 4 {
        return Err(bad("length does not match header"));
    }
    let data = bytes[32..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(SavedMatrix {
        probs: Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(&e.to_string()))?,
        seconds_per_frame: spf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let m = AlignmentMatrix::from_logits(Array2::from_shape_fn((3, 5), |(i, j)| (i * j) as f64 * 0.3));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.lyam");
        save_matrix(&p, &m, 0.128).unwrap();
        let back = load_matrix(&p).unwrap();
        assert_eq!(back.seconds_per_frame, 0.128);
        for (a, b) in back.probs.iter().zip(m.probs().iter()) {
            assert_eq!(*a, *b as f32);
        }
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Format(_))));
    }
}
