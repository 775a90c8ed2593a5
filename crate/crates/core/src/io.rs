//! Binary matrix files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset 0   4 bytes   magic "UTLM"
//! offset 4   u32       format version (currently 1)
//! offset 8   u64       rows
//! offset 16  u64       cols
//! offset 24  f64 * rows * cols   entries in row-major order
//! ```
//!
//! Round trips are bit-exact. Malformed files fail with the byte offset of
//! the problem.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linops::Matrix;

pub const MATRIX_MAGIC: [u8; 4] = *b"UTLM";
pub const MATRIX_FORMAT_VERSION: u32 = 1;

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MATRIX_MAGIC).map_err(io_err)?;
    w.write_all(&MATRIX_FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(m.rows() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(m.cols() as u64).to_le_bytes()).map_err(io_err)?;
    for v in m.to_row_major() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

struct Tracked<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Tracked<R> {
    fn read_exact(&mut self, path: &Path, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format {
                    path: path.to_path_buf(),
                    offset: at,
                    reason: format!("truncated while reading {what}"),
                }
            } else {
                Error::Io {
                    path: path.to_path_buf(),
                    source: e,
                }
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Tracked {
        inner: BufReader::new(file),
        offset: 0,
    };
    let format = |offset: u64, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    };

    let mut magic = [0u8; 4];
    r.read_exact(path, &mut magic, "magic")?;
    if magic != MATRIX_MAGIC {
        return Err(format(0, format!("bad magic {magic:02x?}, expected \"UTLM\"")));
    }

    let mut b4 = [0u8; 4];
    r.read_exact(path, &mut b4, "format version")?;
    let version = u32::from_le_bytes(b4);
    if version != MATRIX_FORMAT_VERSION {
        return Err(format(
            4,
            format!("unsupported format version {version}, expected {MATRIX_FORMAT_VERSION}"),
        ));
    }

    let mut b8 = [0u8; 8];
    r.read_exact(path, &mut b8, "row count")?;
    let rows = u64::from_le_bytes(b8);
    r.read_exact(path, &mut b8, "column count")?;
    let cols = u64::from_le_bytes(b8);
    if rows == 0 || cols == 0 {
        return Err(format(8, format!("dimensions must be positive, got {rows}x{cols}")));
    }
    let count = rows
        .checked_mul(cols)
        .filter(|&c| c <= (usize::MAX as u64) && c <= (1 << 40))
        .ok_or_else(|| format(8, format!("implausible dimensions {rows}x{cols}")))? as usize;

    let mut entries = Vec::with_capacity(count);
    for idx in 0..count {
        let at = r.offset;
        r.read_exact(path, &mut b8, "matrix entry")?;
        let v = f64::from_le_bytes(b8);
        if !v.is_finite() {
            return Err(format(at, format!("non-finite entry {v} at index {idx}")));
        }
        entries.push(v);
    }

    let mut probe = [0u8; 1];
    let end = r.offset;
    match r.inner.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(format(end, "trailing bytes after matrix payload".into()));
        }
        Err(source) => {
            return Err(Error::Io {
                path: path.to_path_buf(),
                source,
            });
        }
    }

    Matrix::from_row_major(rows as usize, cols as usize, &entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Matrix::from_fn(50, 400, |_, _| rng.random::<f64>() * 2e3 - 1e3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.utlm");
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m, back);
        let a: Vec<u64> = m.to_row_major().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.to_row_major().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn one_by_one_is_32_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scalar.utlm");
        write_matrix(&path, &Matrix::from_row_major(1, 1, &[42.0]).unwrap()).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 32);
    }

    #[test]
    fn truncation_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.utlm");
        let m = Matrix::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        write_matrix(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..40]).unwrap(); // cut inside entry 3
        match read_matrix(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 40),
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.utlm");
        let m = Matrix::from_row_major(1, 1, &[1.0]).unwrap();
        write_matrix(&path, &m).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        match read_matrix(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected a format error, got {other:?}"),
        }

        write_matrix(&path, &m).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        match read_matrix(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trail.utlm");
        write_matrix(&path, &Matrix::from_row_major(1, 1, &[7.0]).unwrap()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        match read_matrix(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 32),
            other => panic!("expected a format error, got {other:?}"),
        }
    }
}
