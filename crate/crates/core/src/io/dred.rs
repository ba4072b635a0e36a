//! DRED1 dense matrix files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DRED"
//! 4       1     version = 1
//! 5       1     dtype: 1 = IEEE-754 binary32, 2 = IEEE-754 binary64
//! 6       2     reserved, zero
//! 8       8     rows, u64 little-endian
//! 16      8     cols, u64 little-endian
//! 24      ...   rows × cols values, little-endian, row-major
//! end-4   4     CRC-32 (IEEE) of the payload bytes, u32 little-endian
//! ```
//!
//! Embedding matrices are written as binary32 with their row ids in a
//! newline-delimited UTF-8 sidecar next to the matrix (`x.dred` → `x.ids`).
//! Edit operators are written as binary64.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;

pub const MAGIC: [u8; 4] = *b"DRED";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;
pub const TRAILER_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// A validated DRED1 image: header fields plus the raw payload bytes.
#[derive(Debug)]
pub struct DredFile {
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
    pub payload: Vec<u8>,
    pub checksum: u32,
}

/// Serializes a header, payload and CRC trailer.
pub fn encode(dtype: Dtype, rows: usize, cols: usize, payload: &[u8]) -> Vec<u8> {
    debug_assert_eq!(payload.len(), rows * cols * dtype.width());
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + TRAILER_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype as u8);
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out
}

/// Parses and validates a DRED1 image. `path` is only used in error messages.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<DredFile> {
    let bad_length = |expected: u64| Error::BadLength {
        path: path.to_path_buf(),
        expected,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        if bytes.len() < 4 && MAGIC.starts_with(bytes) {
            return Err(bad_length((HEADER_LEN + TRAILER_LEN) as u64));
        }
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(bad_length((HEADER_LEN + TRAILER_LEN) as u64));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version: bytes[4],
        });
    }
    let dtype = Dtype::from_code(bytes[5]).ok_or(Error::UnsupportedDtype {
        path: path.to_path_buf(),
        dtype: bytes[5],
    })?;
    if bytes[6..8] != [0, 0] {
        return Err(Error::ReservedBytes {
            path: path.to_path_buf(),
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.width() as u64))
        .and_then(|n| n.checked_add((HEADER_LEN + TRAILER_LEN) as u64))
        .ok_or_else(|| bad_length(u64::MAX))?;
    if expected != bytes.len() as u64 {
        return Err(bad_length(expected));
    }
    let payload = &bytes[HEADER_LEN..bytes.len() - TRAILER_LEN];
    let stored = u32::from_le_bytes(bytes[bytes.len() - TRAILER_LEN..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
            stored,
            computed,
        });
    }
    Ok(DredFile {
        dtype,
        rows: rows as usize,
        cols: cols as usize,
        payload: payload.to_vec(),
        checksum: stored,
    })
}

pub fn read_file(path: &Path) -> Result<DredFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a sibling temp file, syncs it, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}-{}",
        name.to_string_lossy(),
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Sidecar path holding row ids: same stem, extension `.ids`.
pub fn ids_path(path: &Path) -> PathBuf {
    path.with_extension("ids")
}

pub fn matrix_payload(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut payload = Vec::with_capacity(m.as_slice().len() * 4);
    for v in m.as_slice() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    payload
}

/// Writes the binary32 matrix and its `.ids` sidecar.
pub fn write_matrix(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let mut ids = String::new();
    for id in m.ids() {
        if id.contains(['\n', '\r']) {
            return Err(Error::InvalidId(id.clone()));
        }
        ids.push_str(id);
        ids.push('\n');
    }
    write_atomic(&ids_path(path), ids.as_bytes())?;
    let bytes = encode(Dtype::F32, m.rows(), m.dim(), &matrix_payload(m));
    write_atomic(path, &bytes)
}

/// Reads a binary32 matrix. Ids come from the `.ids` sidecar; without one
/// the rows are named by their decimal index.
pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let file = read_file(path)?;
    if file.dtype != Dtype::F32 {
        return Err(Error::UnsupportedDtype {
            path: path.to_path_buf(),
            dtype: file.dtype as u8,
        });
    }
    if file.cols == 0 {
        return Err(Error::DimensionMismatch {
            context: "DRED1 matrix columns (must be >= 1)",
            expected: 1,
            found: 0,
        });
    }
    let data: Vec<f32> = file
        .payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry {
            row: pos / file.cols,
            col: pos % file.cols,
        });
    }
    let sidecar = ids_path(path);
    let ids: Vec<String> = match fs::read_to_string(&sidecar) {
        Ok(text) => text.lines().map(str::to_string).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            (0..file.rows).map(|i| i.to_string()).collect()
        }
        Err(e) => return Err(Error::io(&sidecar, e)),
    };
    if ids.len() != file.rows {
        return Err(Error::IdCountMismatch {
            path: sidecar,
            ids: ids.len(),
            rows: file.rows,
        });
    }
    EmbeddingMatrix::new(ids, file.cols, data)
}

/// Weights of a square operator stored as binary64, plus the payload CRC.
pub(crate) fn read_weights(path: &Path) -> Result<(DMatrix<f64>, u32)> {
    let file = read_file(path)?;
    if file.dtype != Dtype::F64 {
        return Err(Error::UnsupportedDtype {
            path: path.to_path_buf(),
            dtype: file.dtype as u8,
        });
    }
    if file.rows != file.cols {
        return Err(Error::DimensionMismatch {
            context: "operator file must be square",
            expected: file.rows,
            found: file.cols,
        });
    }
    let values: Vec<f64> = file
        .payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((
        DMatrix::from_row_slice(file.rows, file.cols, &values),
        file.checksum,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let bytes = encode(Dtype::F32, 1, 2, &[0, 0, 128, 63, 0, 0, 0, 64]);
        assert_eq!(&bytes[..4], b"DRED");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[6..8], &[0, 0]);
        assert_eq!(&bytes[8..16], &1u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 8 + 4);
        let crc = u32::from_le_bytes(bytes[32..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(&bytes[24..32]));
    }

    #[test]
    fn decode_rejections() {
        let p = Path::new("m.dred");
        let good = encode(Dtype::F32, 1, 1, &1f32.to_le_bytes());
        assert!(decode(p, &good).is_ok());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(p, &bad), Err(Error::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            decode(p, &bad),
            Err(Error::UnsupportedVersion { version: 2, .. })
        ));

        let mut bad = good.clone();
        bad[5] = 9;
        assert!(matches!(
            decode(p, &bad),
            Err(Error::UnsupportedDtype { dtype: 9, .. })
        ));

        assert!(matches!(
            decode(p, &good[..good.len() - 1]),
            Err(Error::BadLength { .. })
        ));
        assert!(matches!(
            decode(p, &good[..3]),
            Err(Error::BadLength { .. })
        ));

        let mut bad = good.clone();
        bad[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode(p, &bad), Err(Error::BadLength { .. })));

        let mut bad = good;
        bad[25] ^= 0x01;
        assert!(matches!(
            decode(p, &bad),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn empty_file_is_bad_length() {
        assert!(matches!(
            decode(Path::new("e"), &[]),
            Err(Error::BadLength { .. })
        ));
    }
}
