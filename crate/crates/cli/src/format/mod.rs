//! Binary containers: an 8-byte magic, a little-endian `u32` header length,
//! a JSON header, and a float64 little-endian payload.

pub mod dataset;
pub mod model;
pub mod report;
pub mod trajectory;

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::AppError;
use crate::Result;

pub(crate) fn write_container<H: Serialize>(
    path: &Path,
    magic: &[u8; 8],
    header: &H,
    payload: &[f64],
) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(magic);
    let header_json =
        serde_json::to_vec(header).map_err(|e| AppError::format(path.display().to_string(), e.to_string()))?;
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

pub(crate) fn read_container<H: DeserializeOwned>(
    path: &Path,
    magic: &[u8; 8],
) -> Result<(H, Vec<f64>)> {
    let bytes = read_bytes(path)?;
    let p = path.display().to_string();
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(AppError::format(p, "bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = 12 + header_len;
    if bytes.len() < header_end {
        return Err(AppError::format(p, "truncated header"));
    }
    let header: H = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| AppError::format(&p, e.to_string()))?;
    let payload_bytes = &bytes[header_end..];
    if payload_bytes.len() % 8 != 0 {
        return Err(AppError::format(p, "payload is not a whole number of f64"));
    }
    let payload = payload_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, payload))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| AppError::io(parent.display().to_string(), e))?;
        }
    }
    let mut f =
        fs::File::create(path).map_err(|e| AppError::io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| AppError::io(path.display().to_string(), e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut f = fs::File::open(path).map_err(|e| AppError::io(path.display().to_string(), e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)
        .map_err(|e| AppError::io(path.display().to_string(), e))?;
    Ok(bytes)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

/// Shortest round-trip decimal formatting; used by every CSV writer so
/// exports are byte-stable.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}
