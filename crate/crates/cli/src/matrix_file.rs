//! `ROMBMAT1` binary matrices: 8-byte magic, `u64` rows, `u64` cols
//! (little-endian), then `rows * cols` little-endian `f64` in row-major order.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"ROMBMAT1";
const HEADER: usize = 24;

pub fn encode(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * m.len());
    encode_into(m, &mut out);
    out
}

pub(crate) fn encode_into(m: &DMatrix<f64>, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

/// Decodes one matrix from the front of `bytes`; returns it with the number
/// of bytes consumed.
pub(crate) fn decode_prefix(bytes: &[u8]) -> std::result::Result<(DMatrix<f64>, usize), String> {
    if bytes.len() < HEADER {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return Err("bad magic".into());
    }
    let rows = usize::try_from(read_u64(bytes, 8)).map_err(|_| "row count overflows")?;
    let cols = usize::try_from(read_u64(bytes, 16)).map_err(|_| "column count overflows")?;
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or("declared size overflows")?;
    let end = HEADER.checked_add(payload).ok_or("declared size overflows")?;
    if bytes.len() < end {
        return Err(format!(
            "declared {rows}x{cols} needs {payload} payload bytes, found {}",
            bytes.len() - HEADER
        ));
    }
    let body = &bytes[HEADER..end];
    let m = DMatrix::from_fn(rows, cols, |i, j| {
        let at = 8 * (i * cols + j);
        f64::from_le_bytes(body[at..at + 8].try_into().expect("8-byte slice"))
    });
    Ok((m, end))
}

/// Decodes a complete file; the payload length must match exactly.
pub fn decode(bytes: &[u8]) -> std::result::Result<DMatrix<f64>, String> {
    let (m, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - used));
    }
    Ok(m)
}

pub fn write(path: &Path, m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let bytes = encode(m);
    std::fs::write(path, &bytes).map_err(|e| CliError::io(path, e))?;
    Ok(bytes)
}

pub fn read(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|reason| CliError::Format {
        path: path.into(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn layout_is_row_major_little_endian() {
        let m = dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0];
        let b = encode(&m);
        assert_eq!(&b[..8], b"ROMBMAT1");
        assert_eq!(read_u64(&b, 8), 2);
        assert_eq!(read_u64(&b, 16), 3);
        assert_eq!(b.len(), 24 + 6 * 8);
        let second = f64::from_le_bytes(b[32..40].try_into().unwrap());
        assert_eq!(second, 2.0);
        assert_eq!(decode(&b).unwrap(), m);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = DMatrix::from_fn(7, 3, |i, j| (i as f64 + 0.1).ln() * (j as f64 - 1.3).exp());
        let mut weird = m.clone();
        weird[(0, 0)] = -0.0;
        weird[(1, 1)] = f64::MIN_POSITIVE / 2.0;
        let back = decode(&encode(&weird)).unwrap();
        for (a, b) in back.iter().zip(weird.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_bad_lengths_and_magic() {
        let b = encode(&dmatrix![1.0, 2.0]);
        assert!(decode(&b[..b.len() - 1]).is_err());
        let mut long = b.clone();
        long.push(0);
        assert!(decode(&long).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert!(decode(&b[..10]).is_err());
        let mut huge = b.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode(&huge).is_err());
    }

    #[test]
    fn empty_matrix() {
        let m = DMatrix::<f64>::zeros(0, 4);
        assert_eq!(decode(&encode(&m)).unwrap().shape(), (0, 4));
    }
}
