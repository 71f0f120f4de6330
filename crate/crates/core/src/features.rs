//! 64-dimensional press embeddings from first-bits segments.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iso15693::UplinkModeSpec;
use crate::synth::{fft_pair, segment_len, BasebandTrace, SEGMENT_BIT_RATE_HZ};

pub const EMBEDDING_DIM: usize = 64;

/// Spectral lines kept per neighborhood (DC, -fs, +fs).
pub const LINES_PER_NEIGHBORHOOD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Spectral,
    Encoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, source: EmbeddingSource) -> Result<Self> {
        if values.len() != EMBEDDING_DIM {
            return Err(Error::InvalidArgument(format!(
                "embedding has {} values, expected {EMBEDDING_DIM}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "embedding entry {i} is not finite"
            )));
        }
        Ok(Self { values, source })
    }
}

/// Deterministic spectral embedding of an `n_bits` segment.
///
/// Dimensions 0..48: natural-log magnitudes of the DFT bins at
/// `center + m * 6620 Hz`, `m = -8..7`, for centers `-fs`, `0`, `+fs`.
/// Dimensions 48..64: mean and standard deviation of `|x|` over each bit period.
pub struct SpectralExtractor {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    bins: Vec<usize>,
    bit_bounds: Vec<(usize, usize)>,
}

const LOG_FLOOR: f64 = 1e-12;

impl SpectralExtractor {
    pub fn new(n_bits: usize, sample_rate: f64) -> Result<Self> {
        let n = segment_len(n_bits, sample_rate);
        if n_bits == 0 || 2 * n_bits + 3 * LINES_PER_NEIGHBORHOOD != EMBEDDING_DIM {
            return Err(Error::InvalidArgument(format!(
                "spectral features need 8-bit segments, got {n_bits} bits"
            )));
        }
        let fs = UplinkModeSpec::default().subcarrier_hz;
        let df = sample_rate / n as f64;
        let half = (LINES_PER_NEIGHBORHOOD / 2) as i64;
        let mut bins = Vec::with_capacity(3 * LINES_PER_NEIGHBORHOOD);
        for center in [-fs, 0.0, fs] {
            for m in -half..half {
                let k = ((center + m as f64 * SEGMENT_BIT_RATE_HZ) / df).round() as i64;
                bins.push(k.rem_euclid(n as i64) as usize);
            }
        }
        let bit_bounds = (0..n_bits)
            .map(|b| (b * n / n_bits, (b + 1) * n / n_bits))
            .collect();
        Ok(Self {
            n,
            fft: fft_pair(n).0,
            bins,
            bit_bounds,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.n
    }

    pub fn extract(&self, segment: &[Complex64]) -> Result<EmbeddingVector> {
        if segment.len() != self.n {
            return Err(Error::SegmentLength {
                expected: self.n,
                actual: segment.len(),
            });
        }
        let scale = crate::synth::rms(segment);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::AllZeroTrace);
        }
        let mut buf: Vec<Complex64> = segment.iter().map(|x| x / scale).collect();
        let env: Vec<f64> = buf.iter().map(|x| x.norm()).collect();
        self.fft.process(&mut buf);
        let norm = 1.0 / (self.n as f64).sqrt();
        let mut values = Vec::with_capacity(EMBEDDING_DIM);
        values.extend(
            self.bins
                .iter()
                .map(|&k| (buf[k].norm() * norm + LOG_FLOOR).ln()),
        );
        for &(a, b) in &self.bit_bounds {
            let part = &env[a..b];
            let mean = part.iter().sum::<f64>() / part.len() as f64;
            let var = part.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / part.len() as f64;
            values.push(mean);
            values.push(var.sqrt());
        }
        EmbeddingVector::new(values, EmbeddingSource::Spectral)
    }
}

pub fn spectral_features(segment: &BasebandTrace) -> Result<EmbeddingVector> {
    SpectralExtractor::new(8, segment.sample_rate)?.extract(&segment.samples)
}

/// One row of an embedding dump.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub card_id: u32,
    pub button_idx: usize,
    pub values: Vec<f64>,
}

/// Writes `card_id,button_idx,e0..e63` rows.
pub fn write_embeddings_csv(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    let mut header = vec!["card_id".to_string(), "button_idx".to_string()];
    header.extend((0..EMBEDDING_DIM).map(|i| format!("e{i}")));
    w.write_record(&header)
        .map_err(|e| Error::format(path, e))?;
    for r in rows {
        let mut rec = vec![r.card_id.to_string(), r.button_idx.to_string()];
        rec.extend(r.values.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let bad = |what: &str| Error::format(path, format!("row {}: {what}", line + 1));
        if rec.len() != EMBEDDING_DIM + 2 {
            return Err(bad(&format!(
                "{} fields, expected {}",
                rec.len(),
                EMBEDDING_DIM + 2
            )));
        }
        let card_id = rec[0].parse().map_err(|_| bad("card_id"))?;
        let button_idx: usize = rec[1].parse().map_err(|_| bad("button_idx"))?;
        if button_idx > 8 {
            return Err(bad("button_idx out of range"));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(EmbeddingRow {
            card_id,
            button_idx,
            values,
        });
    }
    Ok(rows)
}
