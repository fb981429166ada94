//! Binary archive of the offline cross tensors and initial projections.
//!
//! Layout: magic `ROMBARC1`, `u64` np, `u64` q, then a fixed sequence of
//! `ROMBMAT1` records: packed mass blocks, stiffness blocks, mean-convection
//! blocks, convection slices, the three forcing parts (as `q x 1`), and the
//! initial projections.

use barycentric_rom::rom::{CrossGalerkinTensors, InitialProjections};
use nalgebra::{DMatrix, DVector};

use crate::matrix_file::{decode_prefix, encode_into};

pub const MAGIC: &[u8; 8] = b"ROMBARC1";

fn vector_matrix(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

pub fn encode(ct: &CrossGalerkinTensors, init: &InitialProjections) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(ct.np as u64).to_le_bytes());
    out.extend_from_slice(&(ct.q as u64).to_le_bytes());
    for m in ct.mass.iter().chain(&ct.stiffness).chain(&ct.mean_convection) {
        encode_into(m, &mut out);
    }
    for m in ct.convection.iter().flatten() {
        encode_into(m, &mut out);
    }
    for v in ct
        .forcing_convection
        .iter()
        .chain(&ct.forcing_diffusion)
        .chain(&ct.forcing_body)
        .chain(init.coords.iter().flatten())
    {
        encode_into(&vector_matrix(v), &mut out);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn matrix(&mut self, shape: (usize, usize)) -> Result<DMatrix<f64>, String> {
        let (m, used) = decode_prefix(&self.bytes[self.at..])
            .map_err(|e| format!("record at byte {}: {e}", self.at))?;
        if m.shape() != shape {
            return Err(format!(
                "record at byte {} is {:?}, expected {shape:?}",
                self.at,
                m.shape()
            ));
        }
        self.at += used;
        Ok(m)
    }

    fn matrices(&mut self, count: usize, shape: (usize, usize)) -> Result<Vec<DMatrix<f64>>, String> {
        (0..count).map(|_| self.matrix(shape)).collect()
    }

    fn vectors(&mut self, count: usize, len: usize) -> Result<Vec<DVector<f64>>, String> {
        (0..count)
            .map(|_| self.matrix((len, 1)).map(|m| m.column(0).into_owned()))
            .collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<(CrossGalerkinTensors, InitialProjections), String> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err("not a tensor archive".into());
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let np = usize::try_from(word(8)).map_err(|_| "np overflows")?;
    let q = usize::try_from(word(16)).map_err(|_| "q overflows")?;
    if np == 0 || q == 0 || np > 1 << 12 || q > 1 << 16 {
        return Err(format!("implausible sizes np={np}, q={q}"));
    }
    let mut r = Reader { bytes, at: 24 };
    let sq = (q, q);
    let mass = r.matrices(np * (np + 1) / 2, sq)?;
    let stiffness = r.matrices(np * np, sq)?;
    let mean_convection = r.matrices(np * np, sq)?;
    let convection = (0..np * np * np)
        .map(|_| r.matrices(q, sq))
        .collect::<Result<Vec<_>, _>>()?;
    let forcing_convection = r.vectors(np, q)?;
    let forcing_diffusion = r.vectors(np, q)?;
    let forcing_body = r.vectors(np, q)?;
    let coords = (0..np)
        .map(|_| r.vectors(np, q))
        .collect::<Result<Vec<_>, _>>()?;
    if r.at != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.at));
    }
    let ct = CrossGalerkinTensors {
        np,
        q,
        mass,
        stiffness,
        mean_convection,
        convection,
        forcing_convection,
        forcing_diffusion,
        forcing_body,
    };
    ct.validate().map_err(|e| e.to_string())?;
    Ok((ct, InitialProjections { coords }))
}
