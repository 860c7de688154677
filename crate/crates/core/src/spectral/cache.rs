//! Binary persistence for [`SpectralBasis`].
//!
//! Layout (little endian): magic `SGSPEC`, `u16` version, 32-byte content
//! hash, `u64` m, `u64` k, k eigenvalues, `m * k` eigenfunction entries in
//! column-major order, m mass entries.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::SpectralBasis;
use crate::error::{Error, Result};
use crate::mesh::MassMatrix;

const MAGIC: &[u8; 6] = b"SGSPEC";
const VERSION: u16 = 1;
const HEADER: usize = 6 + 2 + 32 + 8 + 8;

pub fn encode(basis: &SpectralBasis, hash: &[u8; 32]) -> Vec<u8> {
    let (m, k) = (basis.dim(), basis.k());
    let mut out = Vec::with_capacity(HEADER + 8 * (k + m * k + m));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(hash);
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(k as u64).to_le_bytes());
    let floats = basis
        .eigenvalues()
        .iter()
        .chain(basis.eigenfunctions().as_slice())
        .chain(basis.mass().diagonal());
    for x in floats {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// `Ok(None)` when the bytes were written for a different hash or version.
pub fn decode(bytes: &[u8], hash: &[u8; 32], path: &Path) -> Result<Option<SpectralBasis>> {
    let corrupt = |message: &str| Error::Cache {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < HEADER || &bytes[..6] != MAGIC {
        return Err(corrupt("not a spectral cache file"));
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != VERSION || &bytes[8..40] != hash {
        return Ok(None);
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (m, k) = (read_u64(40), read_u64(48));
    let count = m
        .checked_mul(k)
        .and_then(|mk| mk.checked_add(k + m))
        .ok_or_else(|| corrupt("header sizes overflow"))?;
    if bytes.len() != HEADER + 8 * count {
        return Err(corrupt("payload length does not match header"));
    }
    let floats: Vec<f64> = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = floats[..k].to_vec();
    let vectors = DMatrix::from_column_slice(m, k, &floats[k..k + m * k]);
    let mass = MassMatrix::from_diagonal(floats[k + m * k..].to_vec())
        .map_err(|e| corrupt(&e.to_string()))?;
    Ok(Some(SpectralBasis::from_parts(
        values,
        vectors,
        Arc::new(mass),
    )))
}

/// `Ok(None)` if the file is missing or stale.
pub fn read(path: &Path, hash: &[u8; 32]) -> Result<Option<SpectralBasis>> {
    match std::fs::read(path) {
        Ok(bytes) => decode(&bytes, hash, path),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn write(path: &Path, basis: &SpectralBasis, hash: &[u8; 32]) -> Result<()> {
    crate::pipeline::write_atomic(path, &encode(basis, hash))
}
