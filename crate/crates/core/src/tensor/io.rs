//! `WCT1` binary tensor files.
//!
//! Layout: magic `WCT1`, one `u8` rank (1..=4), `rank` little-endian `u32`
//! extents, then the payload as little-endian `f64`. No padding, no checksum.

use std::fs;
use std::path::Path;

use super::{Tensor, MAX_RANK};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WCT1";

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    if !t.is_finite() {
        return Err(Error::Invariant("refusing to write non-finite tensor".into()));
    }
    let mut out = Vec::with_capacity(5 + 4 * t.rank() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(t.rank() as u8);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing WCT1 magic".into()));
    }
    let rank = bytes[4] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!("rank {rank} outside 1..=4")));
    }
    let header = 5 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Format("truncated header".into()));
    }
    let dims: Vec<usize> = bytes[5..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("extent product overflows".into()))?;
    let payload = &bytes[header..];
    if count.checked_mul(8) != Some(payload.len()) {
        return Err(Error::Format(format!(
            "header declares {count} values ({} bytes), payload has {} bytes",
            count.saturating_mul(8),
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&fs::read(path)?)
}
