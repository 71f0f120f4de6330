//! ISO/IEC 15693 inventory framing, 1-out-of-4 downlink and one-subcarrier uplink.
//!
//! Bits are transmitted least significant first within each byte and the CRC
//! goes out low byte first. Downlink and uplink timing are derived from the
//! 13.56 MHz carrier: a downlink sub-slot is `128 / f_c` (9.44 us) and an
//! uplink half-bit is `1024 / f_c` (32 subcarrier cycles, 75.52 us).

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::CARRIER_HZ;
use crate::error::{Error, Result};

pub const INVENTORY_COMMAND: u8 = 0x21;

/// Flag bit announcing an AFI byte in an inventory request.
pub const AFI_FLAG: u8 = 0x10;

/// `crc16(p ++ crc_bytes(crc16(p)))` for every payload `p`.
pub const CRC_RESIDUE: u16 = 0x0F47;

const CRC_POLY_REFLECTED: u16 = 0x8408;

/// CRC-16 per ISO/IEC 13239: reflected poly 0x8408, preset 0xFFFF, final complement.
pub fn crc16(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= byte as u16;
        for _ in 0..8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ CRC_POLY_REFLECTED
            } else {
                crc >> 1
            };
        }
    }
    !crc
}

/// CRC in wire order (low byte first).
pub fn crc_bytes(crc: u16) -> [u8; 2] {
    crc.to_le_bytes()
}

/// Splits bytes into bits, least significant bit of each byte first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|b| (0..8).map(move |i| (b >> i) & 1))
        .collect()
}

pub fn bits_to_bytes(bits: &[u8]) -> Result<Vec<u8>> {
    if bits.len() % 8 != 0 {
        return Err(Error::Frame(format!(
            "{} bits is not a whole number of bytes",
            bits.len()
        )));
    }
    Ok(bits
        .chunks_exact(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << i))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryRequest {
    pub flags: u8,
    pub command: u8,
    pub afi: Option<u8>,
    /// Mask length in bits.
    pub mask_len: u8,
    /// Mask value, `ceil(mask_len / 8)` bytes, unused high bits zero.
    pub mask: Vec<u8>,
}

impl InventoryRequest {
    /// The request of Table II: flags 0x02, inventory, 8-bit zero mask.
    pub fn reference() -> Self {
        Self {
            flags: 0x02,
            command: INVENTORY_COMMAND,
            afi: None,
            mask_len: 8,
            mask: vec![0x00],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mask_len > 64 {
            return Err(Error::Frame(format!(
                "mask length {} exceeds the 64-bit UID",
                self.mask_len
            )));
        }
        let need = (self.mask_len as usize).div_ceil(8);
        if self.mask.len() != need {
            return Err(Error::Frame(format!(
                "mask length {} needs {need} mask bytes, got {}",
                self.mask_len,
                self.mask.len()
            )));
        }
        let spare = need * 8 - self.mask_len as usize;
        if spare > 0 {
            let last = self.mask[need - 1];
            if last >> (8 - spare) != 0 {
                return Err(Error::Frame(format!(
                    "mask byte {last:#04x} has bits set beyond mask length {}",
                    self.mask_len
                )));
            }
        }
        if (self.flags & AFI_FLAG != 0) != self.afi.is_some() {
            return Err(Error::Frame("AFI flag and AFI field disagree".to_string()));
        }
        Ok(())
    }

    /// Payload bytes before the CRC.
    pub fn payload(&self) -> Vec<u8> {
        let mut out = vec![self.flags, self.command];
        out.extend(self.afi);
        out.push(self.mask_len);
        out.extend_from_slice(&self.mask);
        out
    }

    pub fn crc(&self) -> u16 {
        crc16(&self.payload())
    }

    /// Payload followed by the CRC, as sent.
    pub fn wire_bytes(&self) -> Vec<u8> {
        let mut out = self.payload();
        out.extend_from_slice(&crc_bytes(self.crc()));
        out
    }

    pub fn to_hex(&self) -> String {
        self.wire_bytes()
            .iter()
            .map(|b| format!("{b:02X}"))
            .collect()
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.len() % 2 != 0 {
            return Err(Error::Frame(format!("odd-length hex string {text:?}")));
        }
        let bytes = (0..text.len())
            .step_by(2)
            .map(|i| {
                u8::from_str_radix(&text[i..i + 2], 16)
                    .map_err(|_| Error::Frame(format!("bad hex digits {:?}", &text[i..i + 2])))
            })
            .collect::<Result<Vec<_>>>()?;
        decode_wire(&bytes)
    }

    /// Named fields for display, in transmission order.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("SOF", "-".to_string()),
            ("Flags", format!("0x{:02X}", self.flags)),
            ("Command", format!("0x{:02X}", self.command)),
        ];
        if let Some(afi) = self.afi {
            out.push(("AFI", format!("0x{afi:02X}")));
        }
        out.push(("Mask length", format!("0x{:02X}", self.mask_len)));
        let mask: String = self.mask.iter().map(|b| format!("{b:02X}")).collect();
        out.push(("Mask", format!("0x{mask}")));
        out.push(("CRC", format!("0x{:04X}", self.crc())));
        out.push(("EOF", "-".to_string()));
        out
    }
}

/// One element of a framed transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    Sof,
    Bit(u8),
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    /// Payload and CRC bits, least significant bit of each byte first.
    pub bits: Vec<u8>,
}

impl EncodedFrame {
    /// Bit count excluding SOF and EOF.
    pub fn payload_bit_len(&self) -> usize {
        self.bits.len()
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(self.bits.len() + 2);
        out.push(Symbol::Sof);
        out.extend(self.bits.iter().map(|&b| Symbol::Bit(b)));
        out.push(Symbol::Eof);
        out
    }
}

pub fn encode_inventory(req: &InventoryRequest) -> Result<EncodedFrame> {
    req.validate()?;
    Ok(EncodedFrame {
        bits: bytes_to_bits(&req.wire_bytes()),
    })
}

pub fn decode_inventory(frame: &EncodedFrame) -> Result<InventoryRequest> {
    decode_wire(&bits_to_bytes(&frame.bits)?)
}

fn decode_wire(bytes: &[u8]) -> Result<InventoryRequest> {
    if bytes.len() < 5 {
        return Err(Error::Frame(format!("{} bytes is too short", bytes.len())));
    }
    if crc16(bytes) != CRC_RESIDUE {
        let n = bytes.len();
        return Err(Error::Frame(format!(
            "CRC mismatch: received {:#06x}, computed {:#06x}",
            u16::from_le_bytes([bytes[n - 2], bytes[n - 1]]),
            crc16(&bytes[..n - 2])
        )));
    }
    let body = &bytes[..bytes.len() - 2];
    let flags = body[0];
    let command = body[1];
    let mut pos = 2;
    let afi = if flags & AFI_FLAG != 0 {
        pos += 1;
        Some(
            *body
                .get(2)
                .ok_or_else(|| Error::Frame("missing AFI".into()))?,
        )
    } else {
        None
    };
    let mask_len = *body
        .get(pos)
        .ok_or_else(|| Error::Frame("missing mask length".into()))?;
    let mask = body[pos + 1..].to_vec();
    let req = InventoryRequest {
        flags,
        command,
        afi,
        mask_len,
        mask,
    };
    req.validate()?;
    Ok(req)
}

impl fmt::Display for InventoryRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in self.fields() {
            writeln!(f, "{name:<12} {value}")?;
        }
        Ok(())
    }
}

/// Downlink waveform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DownlinkWaveformSpec {
    pub sample_rate: f64,
    /// 1.0 is 100 % ASK.
    pub modulation_depth: f64,
    pub amplitude: f64,
}

impl Default for DownlinkWaveformSpec {
    fn default() -> Self {
        Self {
            sample_rate: 12.5e6,
            modulation_depth: 1.0,
            amplitude: 1.0,
        }
    }
}

/// Downlink sub-slot (9.44 us). A 1-of-4 symbol spans 8 sub-slots.
pub const DOWNLINK_SUBSLOT_S: f64 = 128.0 / CARRIER_HZ;

const SOF_PAUSES: [usize; 2] = [0, 5];
const SOF_SUBSLOTS: usize = 8;
const EOF_PAUSES: [usize; 2] = [0, 3];
const EOF_SUBSLOTS: usize = 4;

impl DownlinkWaveformSpec {
    fn check(&self) -> Result<()> {
        if !(self.modulation_depth > 0.0 && self.modulation_depth <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "modulation depth {} outside (0, 1]",
                self.modulation_depth
            )));
        }
        let required = 2.0 / DOWNLINK_SUBSLOT_S;
        if !(self.sample_rate >= required) {
            return Err(Error::SampleRate {
                rate: self.sample_rate,
                required,
            });
        }
        Ok(())
    }

    /// First sample of sub-slot `k` counted from frame start.
    pub fn subslot_start(&self, k: usize) -> usize {
        (k as f64 * DOWNLINK_SUBSLOT_S * self.sample_rate).round() as usize
    }
}

/// Pause sub-slots of a 1-of-4 frame, as (sub-slot index, total sub-slot count).
fn downlink_pauses(bits: &[u8]) -> Result<(Vec<usize>, usize)> {
    if bits.len() % 2 != 0 {
        return Err(Error::OddBitCount(bits.len()));
    }
    let mut pauses: Vec<usize> = SOF_PAUSES.to_vec();
    let mut slot = SOF_SUBSLOTS;
    for pair in bits.chunks_exact(2) {
        let value = (pair[0] & 1) as usize | (((pair[1] & 1) as usize) << 1);
        pauses.push(slot + 2 * value + 1);
        slot += 8;
    }
    pauses.extend(EOF_PAUSES.iter().map(|p| slot + p));
    Ok((pauses, slot + EOF_SUBSLOTS))
}

/// 1-out-of-4 PPM with SOF and EOF; each bit pair (first bit least
/// significant) selects the pause position in its 75.52 us symbol.
pub fn ppm_1of4_modulate(bits: &[u8], spec: &DownlinkWaveformSpec) -> Result<Vec<f64>> {
    spec.check()?;
    let (pauses, total) = downlink_pauses(bits)?;
    let high = spec.amplitude;
    let low = spec.amplitude * (1.0 - spec.modulation_depth);
    let mut out = vec![high; spec.subslot_start(total)];
    for p in pauses {
        out[spec.subslot_start(p)..spec.subslot_start(p + 1)].fill(low);
    }
    Ok(out)
}

/// Inverse of [`ppm_1of4_modulate`] for a frame starting at sample 0.
pub fn ppm_1of4_demodulate(samples: &[f64], spec: &DownlinkWaveformSpec) -> Result<Vec<u8>> {
    spec.check()?;
    let peak = samples.iter().cloned().fold(0.0, f64::max);
    let threshold = peak * (1.0 - 0.5 * spec.modulation_depth);
    let paused = |k: usize| -> Option<bool> {
        let (a, b) = (spec.subslot_start(k), spec.subslot_start(k + 1));
        if b > samples.len() || a == b {
            return None;
        }
        let mean = samples[a..b].iter().sum::<f64>() / (b - a) as f64;
        Some(mean < threshold)
    };
    let sof_ok = (0..SOF_SUBSLOTS).all(|k| paused(k) == Some(SOF_PAUSES.contains(&k)));
    if !sof_ok {
        return Err(Error::Frame("downlink SOF not found".into()));
    }
    let mut bits = Vec::new();
    let mut slot = SOF_SUBSLOTS;
    loop {
        if paused(slot) == Some(true) {
            let eof = (0..EOF_SUBSLOTS).all(|k| paused(slot + k) == Some(EOF_PAUSES.contains(&k)));
            return if eof {
                Ok(bits)
            } else {
                Err(Error::Frame(format!("malformed EOF at sub-slot {slot}")))
            };
        }
        let hits: Vec<usize> = (0..4)
            .filter(|v| paused(slot + 2 * v + 1) == Some(true))
            .collect();
        match hits.as_slice() {
            [v] => {
                bits.push((v & 1) as u8);
                bits.push((v >> 1) as u8);
            }
            _ => {
                return Err(Error::Frame(format!(
                    "symbol at sub-slot {slot} has {} pauses",
                    hits.len()
                )))
            }
        }
        slot += 8;
    }
}

/// Uplink mode: one subcarrier, low data rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UplinkModeSpec {
    pub carrier_hz: f64,
    pub subcarrier_hz: f64,
    pub data_rate_bps: f64,
}

impl Default for UplinkModeSpec {
    fn default() -> Self {
        Self::one_subcarrier_low()
    }
}

impl UplinkModeSpec {
    /// 423.75 kHz subcarrier, 6.62 kbit/s.
    pub fn one_subcarrier_low() -> Self {
        Self {
            carrier_hz: CARRIER_HZ,
            subcarrier_hz: CARRIER_HZ / 32.0,
            data_rate_bps: CARRIER_HZ / 2048.0,
        }
    }

    pub fn half_bit_s(&self) -> f64 {
        0.5 / self.data_rate_bps
    }

    /// Samples per data bit (not rounded).
    pub fn samples_per_bit(&self, sample_rate: f64) -> f64 {
        sample_rate / self.data_rate_bps
    }

    fn check(&self, sample_rate: f64) -> Result<()> {
        let required = 2.0 * self.subcarrier_hz;
        if !(sample_rate >= required) {
            return Err(Error::SampleRate {
                rate: sample_rate,
                required,
            });
        }
        Ok(())
    }

    /// First sample of half-bit `k` counted from frame start.
    pub fn half_bit_start(&self, k: usize, sample_rate: f64) -> usize {
        (k as f64 * self.half_bit_s() * sample_rate).round() as usize
    }
}

/// Half-bit pattern of an uplink frame: `true` where the subcarrier is on.
///
/// SOF is 3 unmodulated half-bits, 3 pulsed, then a logic 1; logic 0 is
/// pulsed then unmodulated and logic 1 the reverse; EOF mirrors SOF.
pub fn response_half_bits(bits: &[u8]) -> Vec<bool> {
    let mut out = vec![false, false, false, true, true, true, false, true];
    for &b in bits {
        if b & 1 == 0 {
            out.extend([true, false]);
        } else {
            out.extend([false, true]);
        }
    }
    out.extend([true, false, true, true, true, false, false, false]);
    out
}

/// Half-bits preceding the first data bit.
pub const RESPONSE_SOF_HALF_BITS: usize = 8;

/// Gate `g(t)` per sample: 1 while the subcarrier is on.
pub fn response_gate(bits: &[u8], mode: &UplinkModeSpec, sample_rate: f64) -> Result<Vec<f64>> {
    mode.check(sample_rate)?;
    let halves = response_half_bits(bits);
    let mut gate = vec![0.0; mode.half_bit_start(halves.len(), sample_rate)];
    for (k, on) in halves.iter().enumerate() {
        if *on {
            gate[mode.half_bit_start(k, sample_rate)..mode.half_bit_start(k + 1, sample_rate)]
                .fill(1.0);
        }
    }
    Ok(gate)
}

/// In-band switching function of the response: `g(t) (1/2 + (2/pi) cos(2 pi f_s t))`.
///
/// The square-wave subcarrier is represented by its mean and fundamental;
/// higher harmonics fall outside a 2 Msample/s capture.
pub fn encode_response(
    bits: &[u8],
    mode: &UplinkModeSpec,
    sample_rate: f64,
) -> Result<Vec<Complex64>> {
    let gate = response_gate(bits, mode, sample_rate)?;
    let w = 2.0 * PI * mode.subcarrier_hz / sample_rate;
    Ok(gate
        .iter()
        .enumerate()
        .map(|(n, g)| Complex64::new(g * (0.5 + 2.0 / PI * (w * n as f64).cos()), 0.0))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedResponse {
    pub bits: Vec<u8>,
    /// Mean half-bit energy contrast in [0, 1].
    pub quality: f64,
}

/// Default minimum decode quality; pure noise averages about 0.375.
pub const DEFAULT_DECODE_THRESHOLD: f64 = 0.7;

/// Subcarrier tone energy (both sidebands) of half-bit `k`.
fn half_bit_energy(
    samples: &[Complex64],
    k: usize,
    mode: &UplinkModeSpec,
    sample_rate: f64,
) -> Option<f64> {
    let (a, b) = (
        mode.half_bit_start(k, sample_rate),
        mode.half_bit_start(k + 1, sample_rate),
    );
    if b > samples.len() {
        return None;
    }
    let w = 2.0 * PI * mode.subcarrier_hz / sample_rate;
    let mut up = Complex64::default();
    let mut down = Complex64::default();
    for (n, x) in samples[a..b].iter().enumerate() {
        let ph = Complex64::from_polar(1.0, w * (a + n) as f64);
        up += x * ph.conj();
        down += x * ph;
    }
    Some(up.norm_sqr() + down.norm_sqr())
}

/// Decodes a response whose SOF starts at sample 0.
///
/// With `n_bits` set, exactly that many bits are read; otherwise bits are
/// read until the EOF pattern (two pulsed half-bits) appears.
pub fn decode_response(
    samples: &[Complex64],
    mode: &UplinkModeSpec,
    sample_rate: f64,
    n_bits: Option<usize>,
    threshold: f64,
) -> Result<DecodedResponse> {
    mode.check(sample_rate)?;
    let mut bits = Vec::new();
    let mut contrasts = Vec::new();
    let mut k = RESPONSE_SOF_HALF_BITS;
    loop {
        if n_bits.is_some_and(|n| bits.len() == n) {
            break;
        }
        let (Some(e1), Some(e2)) = (
            half_bit_energy(samples, k, mode, sample_rate),
            half_bit_energy(samples, k + 1, mode, sample_rate),
        ) else {
            if n_bits.is_some() {
                return Err(Error::OutOfRange {
                    start: mode.half_bit_start(k, sample_rate),
                    end: mode.half_bit_start(k + 2, sample_rate),
                    len: samples.len(),
                });
            }
            break;
        };
        let total = e1 + e2;
        let contrast = if total > 0.0 {
            (e1 - e2).abs() / total
        } else {
            0.0
        };
        if n_bits.is_none() && !bits.is_empty() && bits.last() == Some(&0) {
            // EOF begins with a logic 0 followed by a pulsed pair.
            let prev_on = half_bit_energy(samples, k - 2, mode, sample_rate).unwrap_or(0.0);
            if e1 > 0.5 * prev_on && e2 > 0.5 * prev_on {
                bits.pop();
                contrasts.pop();
                break;
            }
        }
        bits.push(if e1 >= e2 { 0 } else { 1 });
        contrasts.push(contrast);
        k += 2;
    }
    let quality = if contrasts.is_empty() {
        0.0
    } else {
        contrasts.iter().sum::<f64>() / contrasts.len() as f64
    };
    if !(quality >= threshold) {
        return Err(Error::DecodeFailure { quality, threshold });
    }
    Ok(DecodedResponse { bits, quality })
}

/// Sidecar header for waveform files written by this module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformHeader {
    pub sample_rate: f64,
    pub mode: String,
}
