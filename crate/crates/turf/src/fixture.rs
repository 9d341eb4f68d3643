//! Flat binary tensors for exchanging test vectors with other
//! implementations: three little-endian `u64` dimensions followed by the
//! values as little-endian `f64`, outermost dimension first.

use std::path::Path;

use turf_core::kernels::Tensor3;
use turf_core::model::TensorShape;

use crate::error::{CliError, Result};

const HEADER: usize = 24;

/// Dimensions are written channels, height, width to match the data order.
pub fn encode(t: &Tensor3) -> Vec<u8> {
    let s = t.shape();
    let mut out = Vec::with_capacity(HEADER + 8 * t.data().len());
    for d in [s.channels, s.height, s.width] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor3, String> {
    if bytes.len() < HEADER {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let n = c.checked_mul(h).and_then(|x| x.checked_mul(w)).ok_or("dimensions overflow")?;
    let body = &bytes[HEADER..];
    if body.len() as u64 != n * 8 {
        return Err(format!("header says {n} values but {} bytes follow", body.len()));
    }
    let shape = TensorShape::new(
        u32::try_from(h).map_err(|_| "height too large")?,
        u32::try_from(w).map_err(|_| "width too large")?,
        u32::try_from(c).map_err(|_| "channel count too large")?,
    )
    .map_err(|e| e.to_string())?;
    let data = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Tensor3::new(shape, data).map_err(|e| e.to_string())
}

pub fn write(path: &Path, t: &Tensor3) -> Result<()> {
    std::fs::write(path, encode(t)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<Tensor3> {
    let bytes = crate::io::read_bytes(path)?;
    decode(&bytes).map_err(|e| CliError::parse(path, e))
}
