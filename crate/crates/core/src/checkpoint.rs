//! Binary checkpoint format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MSWM"
//! 4       4     format version, u32 little-endian
//! 8       8     dim, u64 little-endian
//! 16      4*dim payload, f32 little-endian
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Result, SwarmError};
use crate::vector::ParamVector;

pub const MAGIC: [u8; 4] = *b"MSWM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encode(x: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * x.dim());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(x.dim() as u64).to_le_bytes());
    for &v in x.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn bad(field: &'static str, reason: impl Into<String>) -> SwarmError {
    SwarmError::Checkpoint {
        field,
        reason: reason.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamVector> {
    if bytes.len() < 4 {
        return Err(bad("magic", "file shorter than the magic"));
    }
    if bytes[..4] != MAGIC {
        return Err(bad(
            "magic",
            format!("expected {:?}, found {:?}", "MSWM", String::from_utf8_lossy(&bytes[..4])),
        ));
    }
    if bytes.len() < 8 {
        return Err(bad("version", "truncated"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad("version", format!("expected {VERSION}, found {version}")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(bad("dim", "truncated"));
    }
    let dim = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let expected = dim.checked_mul(4).filter(|&n| n == payload.len() as u64);
    if expected.is_none() {
        return Err(bad(
            "payload",
            format!("dim {dim} needs {} bytes, found {}", dim.saturating_mul(4), payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ParamVector::new(values)
}

/// Writes the vector at 32-bit precision.
pub fn save_checkpoint(x: &ParamVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(x);
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v as f32).is_finite()) {
        return Err(SwarmError::NonFinite { index, value });
    }
    fs::write(path, bytes).map_err(|e| SwarmError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamVector> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SwarmError::io(path, e))?;
    decode(&bytes)
}
