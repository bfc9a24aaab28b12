//! Versioned binary checkpoints: a flat `f64` parameter vector behind a
//! JSON config header.
//!
//! Layout (little-endian): magic `DSRCKPT\0`, `u32` format version,
//! `u32` header length, header bytes, `u64` parameter count, parameters.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DSRCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode<H: Serialize>(header: &H, params: &[f64]) -> Result<Vec<u8>> {
    let hdr = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(24 + hdr.len() + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(hdr.len() as u32).to_le_bytes());
    out.extend_from_slice(&hdr);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn decode<H: DeserializeOwned>(mut bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    if take(&mut bytes, 8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().unwrap()) as usize;
    let header = serde_json::from_slice(take(&mut bytes, hlen)?)?;
    let n = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().unwrap()) as usize;
    let body = take(&mut bytes, n.checked_mul(8).ok_or_else(|| Error::Checkpoint("bad length".into()))?)?;
    if !bytes.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, params))
}

pub fn save<H: Serialize>(path: &Path, header: &H, params: &[f64]) -> Result<()> {
    std::fs::write(path, encode(header, params)?)?;
    Ok(())
}

pub fn load<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode(&bytes)
}
