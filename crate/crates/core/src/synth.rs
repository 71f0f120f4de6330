//! Baseband synthesis of button presses as captured by the reader receiver,
//! plus the receive chain: noise injection, baseline removal, correlation
//! trigger and first-bits extraction.
//!
//! A press is rendered from three spectral lines. Solving the coupled circuit
//! with the card modulator open (`u = 1`) and closed (`u = 0`) at the carrier
//! and at both subcarrier sidebands gives the reader-current swing `delta(f)`.
//! With the square-wave subcarrier reduced to `1/2 + (2/pi) cos(w_s t)`, the
//! received samples during a pulsed half-bit are
//!
//! ```text
//! x = H(fc) i_idle + H(fc) delta(fc) / 2
//!     + H(fc + fs) delta(fc + fs) / pi * exp(+j w_s t)
//!     + H(fc - fs) delta(fc - fs) / pi * exp(-j w_s t)
//! ```
//!
//! and `H(fc) i_idle` elsewhere.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::circuit::{angular, solve_system, CardCircuit, CouplingFactors, Testbed};
use crate::coil::{button_positions, CouplingTable};
use crate::error::{Error, Result};
use crate::iqfile;
use crate::iso15693::{response_gate, UplinkModeSpec, RESPONSE_SOF_HALF_BITS};

pub const SAMPLE_RATE_HZ: f64 = 2.0e6;

/// Nominal uplink bit rate used to size extracted segments.
pub const SEGMENT_BIT_RATE_HZ: f64 = 6620.0;

/// First response byte (flags) of an inventory reply: identical on every card.
pub const PREAMBLE_BITS: [u8; 8] = [0; 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub card_id: u32,
    /// None for presses that are not on a grid button (or no button at all).
    pub button_idx: Option<usize>,
    pub orientation_idx: usize,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasebandTrace {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    pub meta: TraceMeta,
}

/// Sidecar contents of a persisted trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub sample_rate: f64,
    #[serde(flatten)]
    pub meta: TraceMeta,
}

impl BasebandTrace {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64, meta: TraceMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty trace".into()));
        }
        let required = 2.0 * UplinkModeSpec::default().subcarrier_hz;
        if !(sample_rate > required) {
            return Err(Error::SampleRate {
                rate: sample_rate,
                required,
            });
        }
        Ok(Self {
            samples,
            sample_rate,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header = TraceHeader {
            sample_rate: self.sample_rate,
            meta: self.meta.clone(),
        };
        iqfile::write_iq(path, &self.samples, &header)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (samples, header): (_, TraceHeader) = iqfile::read_iq(path)?;
        Self::new(samples, header.sample_rate, header.meta)
    }
}

pub fn rms(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64).sqrt()
}

/// Mean power of `x` about its mean.
pub fn ac_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<Complex64>() / n;
    x.iter().map(|s| (s - mean).norm_sqr()).sum::<f64>() / n
}

/// Reader front end as a loaded second-order resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    pub f0_hz: f64,
    pub q_loaded: f64,
}

impl FrontEnd {
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let detune = f_hz / self.f0_hz - self.f0_hz / f_hz;
        1.0 / Complex64::new(1.0, self.q_loaded * detune)
    }
}

/// Per-placement channel summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub front_end: FrontEnd,
    /// Reader-card coupling factor magnitude.
    pub coupling_k: f64,
    /// Reader current magnitude with the modulator averaged over a subcarrier period (A).
    pub a_cw: f64,
    /// Reader current swing at the carrier between the two modulator states (A).
    pub a_card: f64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.front_end.q_loaded > 0.0
            && (0.0..=1.0).contains(&self.coupling_k)
            && self.a_cw >= 0.0
            && self.a_card >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent channel model {self:?}"
            )))
        }
    }
}

/// Spectral lines of one placement: idle reader current and the modulation
/// swing at `fc - fs`, `fc`, `fc + fs`, all after the front end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressLines {
    pub idle: Complex64,
    pub delta: [Complex64; 3],
    pub channel: ChannelModel,
}

/// Spread of card parameters and placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationSpec {
    /// Half-width of the uniform fractional spread on L2, R2 and C2.
    pub component_tolerance: f64,
    /// Nominal card offset (x, y, z) per orientation.
    pub orientation_offsets_mm: Vec<[f64; 3]>,
    /// Half-width of the uniform per-card spread around each orientation offset.
    pub orientation_jitter_mm: f64,
    /// Half-width of the uniform per-press lateral placement jitter.
    pub placement_jitter_mm: f64,
}

impl Default for VariationSpec {
    fn default() -> Self {
        Self {
            component_tolerance: 0.02,
            orientation_offsets_mm: vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.25],
                [-1.0, 0.0, -0.25],
                [0.0, 1.0, -0.25],
                [0.0, -1.0, 0.25],
            ],
            orientation_jitter_mm: 0.5,
            placement_jitter_mm: 1.0,
        }
    }
}

impl VariationSpec {
    /// No spread at all: every card is the reference card.
    pub fn none() -> Self {
        Self {
            component_tolerance: 0.0,
            orientation_offsets_mm: vec![[0.0; 3]],
            orientation_jitter_mm: 0.0,
            placement_jitter_mm: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .orientation_offsets_mm
            .iter()
            .flatten()
            .all(|v| v.is_finite());
        if !(0.0..0.5).contains(&self.component_tolerance)
            || self.orientation_offsets_mm.is_empty()
            || !finite
            || !(self.orientation_jitter_mm >= 0.0)
            || !(self.placement_jitter_mm >= 0.0)
        {
            return Err(Error::Config(format!("invalid card variation {self:?}")));
        }
        Ok(())
    }

    /// Largest lateral and axial card displacement any press can see (m).
    pub fn reach_m(&self) -> (f64, f64) {
        let lat = self
            .orientation_offsets_mm
            .iter()
            .map(|o| o[0].hypot(o[1]))
            .fold(0.0, f64::max);
        let ax = self
            .orientation_offsets_mm
            .iter()
            .map(|o| o[2].abs())
            .fold(0.0, f64::max);
        let j = self.orientation_jitter_mm;
        (
            (lat + 2f64.sqrt() * (j + self.placement_jitter_mm)) * 1e-3,
            (ax + j) * 1e-3,
        )
    }
}

/// One physical card: component scales and its realized orientation offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardVariation {
    pub card_id: u32,
    pub seed: u64,
    pub l2_scale: f64,
    pub r2_scale: f64,
    pub c2_scale: f64,
    pub orientation_offsets_m: Vec<[f64; 3]>,
    pub placement_jitter_m: f64,
}

impl CardVariation {
    pub fn draw(card_id: u32, seed: u64, spec: &VariationSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed(seed, &[0xCA4D, card_id as u64]));
        let tol = spec.component_tolerance;
        let scale = |rng: &mut ChaCha8Rng| 1.0 + tol * rng.random_range(-1.0..=1.0);
        let l2_scale = scale(&mut rng);
        let r2_scale = scale(&mut rng);
        let c2_scale = scale(&mut rng);
        let j = spec.orientation_jitter_mm;
        let orientation_offsets_m = spec
            .orientation_offsets_mm
            .iter()
            .map(|o| {
                let mut d = [0.0; 3];
                for (di, oi) in d.iter_mut().zip(o) {
                    *di = (oi + j * rng.random_range(-1.0..=1.0)) * 1e-3;
                }
                d
            })
            .collect();
        Ok(Self {
            card_id,
            seed,
            l2_scale,
            r2_scale,
            c2_scale,
            orientation_offsets_m,
            placement_jitter_m: spec.placement_jitter_mm * 1e-3,
        })
    }

    pub fn nominal(card_id: u32) -> Self {
        Self::draw(card_id, 0, &VariationSpec::none()).expect("the empty spec is valid")
    }

    pub fn n_orientations(&self) -> usize {
        self.orientation_offsets_m.len()
    }

    pub fn apply(&self, base: &CardCircuit) -> CardCircuit {
        CardCircuit {
            l2: base.l2 * self.l2_scale,
            r2: base.r2 * self.r2_scale,
            c2_prime: base.c2_prime * self.c2_scale,
            c_p: base.c_p * self.c2_scale,
            ..*base
        }
    }

    /// Card displacement relative to the reader for one press.
    pub fn press_shift(&self, orientation: usize, rng: &mut impl Rng) -> Result<[f64; 3]> {
        let o = self.orientation_offsets_m.get(orientation).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "orientation {orientation} out of range (card has {})",
                self.orientation_offsets_m.len()
            ))
        })?;
        let j = self.placement_jitter_m;
        let (dx, dy) = if j > 0.0 {
            (rng.random_range(-j..=j), rng.random_range(-j..=j))
        } else {
            (0.0, 0.0)
        };
        Ok([o[0] + dx, o[1] + dy, o[2]])
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and task coordinates.
pub fn task_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub sample_rate: f64,
    /// Response bits after SOF.
    pub payload: Vec<u8>,
    /// Samples before the SOF: `lead_in_min` plus a uniform draw below `lead_in_spread`.
    pub lead_in_min: usize,
    pub lead_in_spread: usize,
    /// Total trace length in samples.
    pub trace_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE_HZ,
            payload: PREAMBLE_BITS.to_vec(),
            lead_in_min: 300,
            lead_in_spread: 200,
            trace_len: 5600,
        }
    }
}

/// A synthesized press and where its SOF begins.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedPress {
    pub trace: BasebandTrace,
    pub frame_start: usize,
    pub factors: CouplingFactors,
    pub channel: ChannelModel,
}

/// Press renderer for one testbed. Coupling factors come from tables built
/// once at construction.
pub struct Synthesizer {
    bed: Testbed,
    cfg: SynthConfig,
    mode: UplinkModeSpec,
    gate: Vec<f64>,
    reader_card: CouplingTable,
    reader_button: CouplingTable,
    card_button: CouplingTable,
}

const TABLE_STEP_M: f64 = 0.5e-3;

impl Synthesizer {
    pub fn new(bed: Testbed, cfg: SynthConfig, variation: &VariationSpec) -> Result<Self> {
        variation.validate()?;
        let mode = UplinkModeSpec::default();
        let gate = response_gate(&cfg.payload, &mode, cfg.sample_rate)?;
        if cfg.lead_in_min + cfg.lead_in_spread + gate.len() > cfg.trace_len {
            return Err(Error::Config(format!(
                "trace length {} cannot hold lead-in {}+{} and a {}-sample frame",
                cfg.trace_len,
                cfg.lead_in_min,
                cfg.lead_in_spread,
                gate.len()
            )));
        }
        let (lat, ax) = variation.reach_m();
        let lat = lat + 2.0 * TABLE_STEP_M;
        let ax = ax + 2.0 * TABLE_STEP_M;
        let layout = &bed.layout;
        let reader = layout.reader()?.moved_to([0.0; 3]);
        let card = layout.card()?;
        let button = layout.button([0.0, 0.0])?.moved_to([0.0; 3]);
        let p0 = layout.reader_offset_m[0].hypot(layout.reader_offset_m[1]);
        let gap = layout.reader_gap_m;
        let h = layout.button_height_m;
        let far = button_positions(&bed.grid)
            .iter()
            .map(|xy| xy[0].hypot(xy[1]))
            .fold(0.0, f64::max)
            + 0.5 * bed.grid.card_width_m.hypot(bed.grid.card_height_m);
        let reader_card = CouplingTable::build(
            &reader,
            &card,
            ((p0 - lat).max(0.0), p0 + lat),
            ((gap - ax).max(TABLE_STEP_M), gap + ax),
            TABLE_STEP_M,
        )?;
        let reader_button = CouplingTable::build(
            &reader,
            &button,
            (0.0, p0 + far + lat),
            ((gap + h - ax).max(TABLE_STEP_M), gap + h + ax),
            TABLE_STEP_M,
        )?;
        let card_button = CouplingTable::build(&card, &button, (0.0, far), (h, h), TABLE_STEP_M)?;
        Ok(Self {
            bed,
            cfg,
            mode,
            gate,
            reader_card,
            reader_button,
            card_button,
        })
    }

    pub fn testbed(&self) -> &Testbed {
        &self.bed
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn mode(&self) -> &UplinkModeSpec {
        &self.mode
    }

    /// Coupling factors with the card shifted by `shift` relative to the reader.
    ///
    /// Tabulated couplings are normalized by the geometric self inductances of
    /// the testbed's coils, like [`Testbed::coupling_factors`].
    pub fn factors(&self, button_xy: Option<[f64; 2]>, shift: [f64; 3]) -> Result<CouplingFactors> {
        let off = self.bed.layout.reader_offset_m;
        let (rx, ry) = (off[0] - shift[0], off[1] - shift[1]);
        let gap = self.bed.layout.reader_gap_m + shift[2];
        let k12 = self.reader_card.eval(rx.hypot(ry), gap)?;
        let (k1p, k2p) = match button_xy {
            Some([bx, by]) => (
                self.reader_button.eval(
                    (bx - rx).hypot(by - ry),
                    gap + self.bed.layout.button_height_m,
                )?,
                self.card_button
                    .eval(bx.hypot(by), self.bed.layout.button_height_m)?,
            ),
            None => (0.0, 0.0),
        };
        Ok(CouplingFactors { k12, k1p, k2p })
    }

    /// Solves the circuit at the carrier and both sidebands in both modulator states.
    pub fn lines(
        &self,
        card: &CardCircuit,
        k: &CouplingFactors,
        with_button: bool,
    ) -> Result<PressLines> {
        let fc = self.bed.carrier_hz;
        let fs = self.mode.subcarrier_hz;
        let solve = |f: f64, on: bool| -> Result<Complex64> {
            let sys = self
                .bed
                .system(k, &card.with_modulation(on), with_button, angular(f));
            Ok(solve_system(&sys)?.i1)
        };
        let idle = solve(fc, false)?;
        let on = solve(fc, true)?;
        let mid = 0.5 * (idle + on);
        // Loaded Q of the reader from its input resistance at the carrier.
        let z_in = self.bed.reader.v1 / mid;
        let q_loaded = angular(fc) * self.bed.reader.l1 / z_in.re.max(f64::MIN_POSITIVE);
        let front_end = FrontEnd {
            f0_hz: fc,
            q_loaded,
        };
        let mut delta = [Complex64::default(); 3];
        for (d, f) in delta.iter_mut().zip([fc - fs, fc, fc + fs]) {
            let swing = if f == fc {
                on - idle
            } else {
                solve(f, true)? - solve(f, false)?
            };
            *d = front_end.response(f) * swing;
        }
        let channel = ChannelModel {
            front_end,
            coupling_k: k.k12.abs().min(1.0),
            a_cw: mid.norm(),
            a_card: (on - idle).norm(),
        };
        Ok(PressLines {
            idle: front_end.response(fc) * idle,
            delta,
            channel,
        })
    }

    /// Renders lines into a trace with the SOF at `lead_in`.
    pub fn render(
        &self,
        lines: &PressLines,
        lead_in: usize,
        meta: TraceMeta,
    ) -> Result<BasebandTrace> {
        let n = self.cfg.trace_len;
        if lead_in + self.gate.len() > n {
            return Err(Error::OutOfRange {
                start: lead_in,
                end: lead_in + self.gate.len(),
                len: n,
            });
        }
        let w = 2.0 * PI * self.mode.subcarrier_hz / self.cfg.sample_rate;
        let [lo, mid, hi] = lines.delta;
        let dc = lines.idle;
        let mut samples = vec![dc; n];
        for (m, (&g, x)) in self.gate.iter().zip(&mut samples[lead_in..]).enumerate() {
            if g == 0.0 {
                continue;
            }
            let rot = Complex64::from_polar(1.0, w * m as f64);
            *x += g * (0.5 * mid + (hi * rot + lo * rot.conj()) / PI);
        }
        BasebandTrace::new(samples, self.cfg.sample_rate, meta)
    }

    /// Reproducible press of grid button `button` (None: card alone).
    pub fn synthesize_press(
        &self,
        button: Option<usize>,
        card: &CardVariation,
        orientation: usize,
        press_seed: u64,
    ) -> Result<SynthesizedPress> {
        let xy = match button {
            Some(b) => Some(*button_positions(&self.bed.grid).get(b).ok_or_else(|| {
                Error::InvalidArgument(format!("button index {b} out of range 0..8"))
            })?),
            None => None,
        };
        let mut press = self.synthesize_at(xy, card, orientation, press_seed)?;
        press.trace.meta.button_idx = button;
        Ok(press)
    }

    /// Press with the button coil centered at an arbitrary card position.
    pub fn synthesize_at(
        &self,
        button_xy: Option<[f64; 2]>,
        card: &CardVariation,
        orientation: usize,
        press_seed: u64,
    ) -> Result<SynthesizedPress> {
        let mut rng = ChaCha8Rng::seed_from_u64(press_seed);
        let shift = card.press_shift(orientation, &mut rng)?;
        let lead_in = self.cfg.lead_in_min
            + if self.cfg.lead_in_spread > 0 {
                rng.random_range(0..self.cfg.lead_in_spread)
            } else {
                0
            };
        let factors = self.factors(button_xy, shift)?;
        let circuit = card.apply(&self.bed.card);
        let lines = self.lines(&circuit, &factors, button_xy.is_some())?;
        let meta = TraceMeta {
            card_id: card.card_id,
            button_idx: None,
            orientation_idx: orientation,
            snr_db: None,
            seed: press_seed,
        };
        Ok(SynthesizedPress {
            trace: self.render(&lines, lead_in, meta)?,
            frame_start: lead_in,
            factors,
            channel: lines.channel,
        })
    }

    /// Samples from SOF start to the first data bit.
    pub fn sof_len(&self) -> usize {
        self.mode
            .half_bit_start(RESPONSE_SOF_HALF_BITS, self.cfg.sample_rate)
    }

    /// Trigger template: the preprocessed response of the nominal card without
    /// a button, covering SOF and the first `n_bits` bits.
    pub fn reference_response(
        &self,
        n_bits: usize,
        pre: &PreprocessConfig,
    ) -> Result<Vec<Complex64>> {
        let card = CardVariation::nominal(0);
        let k = self.factors(None, [0.0; 3])?;
        let lines = self.lines(&card.apply(&self.bed.card), &k, false)?;
        let lead_in = self.cfg.lead_in_min;
        let meta = TraceMeta {
            card_id: 0,
            button_idx: None,
            orientation_idx: 0,
            snr_db: None,
            seed: 0,
        };
        let trace = preprocess(&self.render(&lines, lead_in, meta)?, pre)?;
        let len = self
            .mode
            .half_bit_start(RESPONSE_SOF_HALF_BITS + 2 * n_bits, self.cfg.sample_rate);
        Ok(trace.samples[lead_in..lead_in + len].to_vec())
    }
}

/// Adds complex white Gaussian noise at `snr_db` relative to the trace's
/// power about its mean. An infinite SNR returns the trace unchanged.
pub fn add_awgn(trace: &BasebandTrace, snr_db: f64, seed: u64) -> Result<BasebandTrace> {
    if snr_db == f64::INFINITY {
        return Ok(trace.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "SNR {snr_db} dB is not finite"
        )));
    }
    let p_signal = ac_power(&trace.samples);
    let sigma = (p_signal / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = trace
        .samples
        .iter()
        .map(|x| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            x + sigma * Complex64::new(re, im)
        })
        .collect();
    let mut meta = trace.meta.clone();
    meta.snr_db = Some(snr_db);
    BasebandTrace::new(samples, trace.sample_rate, meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Baseline averaging window in subcarrier periods.
    pub window_periods: f64,
    pub subcarrier_hz: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            window_periods: 50.0,
            subcarrier_hz: UplinkModeSpec::default().subcarrier_hz,
        }
    }
}

impl PreprocessConfig {
    pub fn window_samples(&self, sample_rate: f64) -> usize {
        (self.window_periods * sample_rate / self.subcarrier_hz)
            .round()
            .max(1.0) as usize
    }
}

pub(crate) fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    thread_local! {
        static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
    }
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Removes the slow baseline and scales to unit RMS.
///
/// The baseline is the part of the trace inside the passband of the
/// moving-average window: DFT bins below `sample_rate / window` are removed.
/// Removing them is a projection, so preprocessing an already preprocessed
/// trace changes nothing beyond rounding.
pub fn preprocess(trace: &BasebandTrace, cfg: &PreprocessConfig) -> Result<BasebandTrace> {
    let n = trace.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    let scale_in = rms(&trace.samples);
    if scale_in == 0.0 || !scale_in.is_finite() {
        return Err(Error::AllZeroTrace);
    }
    let window = cfg.window_samples(trace.sample_rate);
    // Bins with |k| / n < 1 / window.
    let cut = n.div_ceil(window);
    let (fwd, inv) = fft_pair(n);
    let mut buf: Vec<Complex64> = trace.samples.iter().map(|x| x / scale_in).collect();
    fwd.process(&mut buf);
    buf[0] = Complex64::default();
    for k in 1..cut.min(n) {
        buf[k] = Complex64::default();
        buf[n - k] = Complex64::default();
    }
    inv.process(&mut buf);
    let out_rms = rms(&buf);
    if !(out_rms > 1e-12) {
        return Err(Error::AllZeroTrace);
    }
    let s = 1.0 / out_rms;
    buf.iter_mut().for_each(|x| *x *= s);
    BasebandTrace::new(buf, trace.sample_rate, trace.meta.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerHit {
    pub index: usize,
    /// Normalized correlation magnitude in [0, 1].
    pub peak: f64,
}

pub const DEFAULT_TRIGGER_THRESHOLD: f64 = 0.5;

/// Correlation trigger against a fixed reference, for traces of one length.
///
/// Only lags where the reference fits entirely inside the trace are scored,
/// so a circular correlation of the trace length suffices.
pub struct Trigger {
    n: usize,
    m: usize,
    reference_spectrum: Vec<Complex64>,
    reference_norm: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pub threshold: f64,
}

impl Trigger {
    pub fn new(reference: &[Complex64], trace_len: usize, threshold: f64) -> Result<Self> {
        let (n, m) = (trace_len, reference.len());
        if m == 0 || m >= n {
            return Err(Error::InvalidArgument(format!(
                "reference length {m} must be nonzero and shorter than the trace ({n})"
            )));
        }
        let reference_norm = reference.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if reference_norm == 0.0 {
            return Err(Error::AllZeroTrace);
        }
        let (fwd, inv) = fft_pair(n);
        let mut reference_spectrum = reference.to_vec();
        reference_spectrum.resize(n, Complex64::default());
        fwd.process(&mut reference_spectrum);
        reference_spectrum.iter_mut().for_each(|x| *x = x.conj());
        Ok(Self {
            n,
            m,
            reference_spectrum,
            reference_norm,
            fwd,
            inv,
            threshold,
        })
    }

    pub fn reference_len(&self) -> usize {
        self.m
    }

    /// Normalized correlation magnitude for every lag in `0..=n - m`;
    /// windows with no energy score zero.
    pub fn correlate(&self, trace: &[Complex64]) -> Result<Vec<f64>> {
        if trace.len() != self.n {
            return Err(Error::SegmentLength {
                expected: self.n,
                actual: trace.len(),
            });
        }
        let mut a = trace.to_vec();
        self.fwd.process(&mut a);
        for (x, y) in a.iter_mut().zip(&self.reference_spectrum) {
            *x *= y;
        }
        self.inv.process(&mut a);
        let mut prefix = Vec::with_capacity(self.n + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for x in trace {
            acc += x.norm_sqr();
            prefix.push(acc);
        }
        let floor = 1e-20 * acc;
        let scale = 1.0 / (self.n as f64 * self.reference_norm);
        Ok((0..=self.n - self.m)
            .map(|k| {
                let e = prefix[k + self.m] - prefix[k];
                if e <= floor {
                    0.0
                } else {
                    (a[k].norm() * scale / e.sqrt()).min(1.0)
                }
            })
            .collect())
    }

    pub fn locate(&self, trace: &[Complex64]) -> Result<TriggerHit> {
        let c = self.correlate(trace)?;
        let (index, peak) = c
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        if !(peak >= self.threshold) {
            return Err(Error::NoSync {
                peak: peak.max(0.0),
                threshold: self.threshold,
            });
        }
        Ok(TriggerHit { index, peak })
    }
}

/// Index of the best match of `reference` in `trace`.
pub fn correlation_trigger(
    trace: &[Complex64],
    reference: &[Complex64],
    threshold: f64,
) -> Result<TriggerHit> {
    Trigger::new(reference, trace.len(), threshold)?.locate(trace)
}

pub fn segment_len(n_bits: usize, sample_rate: f64) -> usize {
    (n_bits as f64 * sample_rate / SEGMENT_BIT_RATE_HZ).round() as usize
}

/// Fixed-length segment of `n_bits` bit periods starting at `start`.
pub fn extract_first_bits(
    trace: &BasebandTrace,
    start: usize,
    n_bits: usize,
) -> Result<BasebandTrace> {
    let len = segment_len(n_bits, trace.sample_rate);
    let end = start + len;
    if len == 0 || end > trace.len() {
        return Err(Error::OutOfRange {
            start,
            end,
            len: trace.len(),
        });
    }
    BasebandTrace::new(
        trace.samples[start..end].to_vec(),
        trace.sample_rate,
        trace.meta.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TraceMeta {
        TraceMeta {
            card_id: 0,
            button_idx: None,
            orientation_idx: 0,
            snr_db: None,
            seed: 0,
        }
    }

    #[test]
    fn segment_length_at_defaults() {
        assert_eq!(segment_len(8, SAMPLE_RATE_HZ), 2417);
    }

    #[test]
    fn preprocess_removes_offset_and_normalizes() {
        let x: Vec<_> = (0..4000)
            .map(|n| Complex64::new(5.0 + (0.4 * n as f64).sin(), -2.0))
            .collect();
        let t = BasebandTrace::new(x, SAMPLE_RATE_HZ, meta()).unwrap();
        let y = preprocess(&t, &PreprocessConfig::default()).unwrap();
        let mean = y.samples.iter().sum::<Complex64>() / y.len() as f64;
        assert!(mean.norm() < 1e-12);
        assert!((y.rms() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_trace_is_all_zero_after_baseline() {
        let t = BasebandTrace::new(vec![Complex64::new(1.0, 1.0); 1000], SAMPLE_RATE_HZ, meta())
            .unwrap();
        assert!(matches!(
            preprocess(&t, &PreprocessConfig::default()),
            Err(Error::AllZeroTrace)
        ));
    }

    #[test]
    fn trigger_finds_embedded_reference() {
        let r: Vec<_> = (0..200)
            .map(|n| Complex64::from_polar(1.0 + (n % 7) as f64, 0.3 * n as f64))
            .collect();
        let mut x = vec![Complex64::default(); 1000];
        x[321..521].copy_from_slice(&r);
        let hit = correlation_trigger(&x, &r, 0.5).unwrap();
        assert_eq!(hit.index, 321);
        assert!((hit.peak - 1.0).abs() < 1e-9);
    }

    #[test]
    fn task_seeds_differ() {
        assert_ne!(task_seed(1, &[0, 1]), task_seed(1, &[1, 0]));
        assert_eq!(task_seed(7, &[3]), task_seed(7, &[3]));
    }
}
