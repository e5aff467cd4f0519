//! `LRSM1` dense matrix files.
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 5     | magic `LRSM1`                           |
//! | 1     | flags, always 0                         |
//! | 1     | dtype, 1 = float64 little-endian        |
//! | 8     | rows, u64 LE                            |
//! | 8     | cols, u64 LE                            |
//! | 8·r·c | entries, f64 LE, row-major              |

use std::fs;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"LRSM1";
pub const DTYPE_F64: u8 = 1;
pub const HEADER_LEN: usize = 5 + 1 + 1 + 8 + 8;

#[derive(Debug, Error)]
pub enum MatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad magic bytes {0:?}, expected \"LRSM1\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported flags byte {0}")]
    UnsupportedFlags(u8),
    #[error("unsupported dtype byte {0}, only 1 (float64) is known")]
    UnsupportedDtype(u8),
    #[error("file truncated at byte offset {offset}: need {needed} bytes, have {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{0} unexpected trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("dimensions {rows}x{cols} are too large")]
    TooLarge { rows: u64, cols: u64 },
}

pub fn encode(m: &Array2<f64>) -> Result<Vec<u8>, MatError> {
    if let Some(((row, col), &value)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(MatError::NonFinite { row, col, value });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.push(0);
    out.push(DTYPE_F64);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for &v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn need(buf: &[u8], offset: usize, len: usize) -> Result<&[u8], MatError> {
    buf.get(offset..offset + len).ok_or(MatError::Truncated {
        offset: buf.len().min(offset),
        needed: len,
        available: buf.len().saturating_sub(offset),
    })
}

pub fn decode(buf: &[u8]) -> Result<Array2<f64>, MatError> {
    let magic = need(buf, 0, 5)?;
    if magic != MAGIC {
        return Err(MatError::BadMagic(magic.to_vec()));
    }
    let flags = need(buf, 5, 1)?[0];
    if flags != 0 {
        return Err(MatError::UnsupportedFlags(flags));
    }
    let dtype = need(buf, 6, 1)?[0];
    if dtype != DTYPE_F64 {
        return Err(MatError::UnsupportedDtype(dtype));
    }
    let word = |off| -> Result<u64, MatError> {
        Ok(u64::from_le_bytes(need(buf, off, 8)?.try_into().expect("8 bytes")))
    };
    let (rows, cols) = (word(7)?, word(15)?);
    let too_large = MatError::TooLarge { rows, cols };
    let r = usize::try_from(rows).map_err(|_| MatError::TooLarge { rows, cols })?;
    let c = usize::try_from(cols).map_err(|_| MatError::TooLarge { rows, cols })?;
    let payload = r
        .checked_mul(c)
        .and_then(|n| n.checked_mul(8))
        .ok_or(too_large)?;
    let body = need(buf, HEADER_LEN, payload)?;
    if buf.len() > HEADER_LEN + payload {
        return Err(MatError::TrailingBytes(buf.len() - HEADER_LEN - payload));
    }
    let mut vals = Vec::with_capacity(r * c);
    for (idx, chunk) in body.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(MatError::NonFinite {
                row: idx / c,
                col: idx % c,
                value: v,
            });
        }
        vals.push(v);
    }
    Ok(Array2::from_shape_vec((r, c), vals).expect("payload length matches shape"))
}

pub fn write(path: &Path, m: &Array2<f64>) -> Result<(), MatError> {
    let bytes = encode(m)?;
    fs::write(path, bytes).map_err(|source| MatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read(path: &Path) -> Result<Array2<f64>, MatError> {
    let bytes = fs::read(path).map_err(|source| MatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_small() {
        let m = array![[1.0, -2.5, 3.0], [0.0, 1e-300, -7.25]];
        let bytes = encode(&m).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 48);
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn typed_errors() {
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        let bytes = encode(&m).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(MatError::BadMagic(_))));

        let mut bad = bytes.clone();
        bad[6] = 2;
        assert!(matches!(decode(&bad), Err(MatError::UnsupportedDtype(2))));

        let cut = &bytes[..bytes.len() - 3];
        match decode(cut) {
            Err(MatError::Truncated { offset, .. }) => assert_eq!(offset, HEADER_LEN),
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode(&bytes[..10]), Err(MatError::Truncated { offset: 7, .. })));

        let mut bad = bytes.clone();
        bad[HEADER_LEN + 8..HEADER_LEN + 16].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode(&bad), Err(MatError::NonFinite { row: 0, col: 1, .. })));

        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode(&long), Err(MatError::TrailingBytes(1))));

        assert!(matches!(
            encode(&array![[f64::INFINITY]]),
            Err(MatError::NonFinite { .. })
        ));
    }
}
