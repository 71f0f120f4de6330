//! Interleaved little-endian float32 IQ files with a JSON sidecar.
//!
//! `trace.iq` holds `re0 im0 re1 im1 ...`; `trace.json` holds the header.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn sidecar_path(iq_path: &Path) -> PathBuf {
    iq_path.with_extension("json")
}

pub fn encode_iq(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8], path: &Path) -> Result<Vec<Complex64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::format(
            path,
            format!("{} bytes is not a whole number of IQ pairs", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

/// Writes samples and header. Parent directories must exist.
pub fn write_iq<H: Serialize>(path: &Path, samples: &[Complex64], header: &H) -> Result<()> {
    fs::write(path, encode_iq(samples)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(header).map_err(|e| Error::format(&side, e))?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn read_iq<H: DeserializeOwned>(path: &Path) -> Result<(Vec<Complex64>, H)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let samples = decode_iq(&bytes, path)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header = serde_json::from_str(&text).map_err(|e| Error::format(&side, e))?;
    Ok((samples, header))
}
