//! Synthetic multi-card dataset, calibration and evaluation protocol.
//!
//! Target-card labels are only reachable through a [`LabelGate`] holding an
//! [`EvalCapability`], which only [`evaluate`] can mint. Every label read is
//! recorded in the gate's audit log.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Testbed;
use crate::encoder::EncoderWeights;
use crate::error::{Error, Result};
use crate::features::SpectralExtractor;
use crate::recognition::{
    build_thresholds, decide_with, fit, Calibration, ClassStats, DecisionRecord, Metric,
    ThresholdTable,
};
use crate::synth::{
    add_awgn, extract_first_bits, preprocess, task_seed, BasebandTrace, CardVariation,
    PreprocessConfig, SynthConfig, Synthesizer, Trigger, VariationSpec, DEFAULT_TRIGGER_THRESHOLD,
};

pub const N_BUTTONS: usize = 9;
pub const DEFAULT_ALPHA: f64 = 0.025;
pub const ALPHA_GRID: [f64; 7] = [0.01, 0.02, 0.025, 0.04, 0.06, 0.08, 0.10];
pub const SNR_GRID_DB: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, 30.0];
/// Attempts per press before an unsynchronized capture is given up on.
pub const MAX_CAPTURE_ATTEMPTS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    SourceTrain,
    Calibration,
    TargetEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub n_cards: u32,
    pub n_source_cards: u32,
    pub n_orientations: usize,
    pub presses_per_orientation: usize,
    pub calibration_fraction: f64,
    /// Noise added to every stored capture; None keeps captures noise-free.
    pub snr_db: Option<f64>,
    pub variation: VariationSpec,
    pub synth: SynthConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_cards: 16,
            n_source_cards: 4,
            n_orientations: 5,
            presses_per_orientation: 100,
            calibration_fraction: 0.1,
            snr_db: Some(30.0),
            variation: VariationSpec::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.variation.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.n_cards == 0 || self.n_source_cards == 0 || self.n_source_cards >= self.n_cards {
            return bad(format!(
                "need 0 < source cards ({}) < cards ({})",
                self.n_source_cards, self.n_cards
            ));
        }
        if self.n_orientations == 0
            || self.n_orientations > self.variation.orientation_offsets_mm.len()
        {
            return bad(format!(
                "{} orientations requested, {} offsets configured",
                self.n_orientations,
                self.variation.orientation_offsets_mm.len()
            ));
        }
        if self.presses_per_orientation == 0 {
            return bad("presses per orientation must be positive".into());
        }
        let n_cal = self.calibration_presses();
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) || n_cal == 0 {
            return bad(format!(
                "calibration fraction {} leaves no calibration presses",
                self.calibration_fraction
            ));
        }
        if self.snr_db.is_some_and(|s| !s.is_finite()) {
            return bad("dataset SNR must be finite".into());
        }
        Ok(())
    }

    /// Presses per (card, button, orientation) withheld for calibration.
    pub fn calibration_presses(&self) -> usize {
        (self.calibration_fraction * self.presses_per_orientation as f64).round() as usize
    }

    pub fn presses_per_card(&self) -> usize {
        N_BUTTONS * self.n_orientations * self.presses_per_orientation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Trace file relative to the dataset directory, when written.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<String>,
    pub card_id: u32,
    pub button_idx: usize,
    pub orientation_idx: usize,
    pub press_idx: usize,
    pub role: Role,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub cards: Vec<CardVariation>,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetHeader {
    config: DatasetConfig,
    cards: Vec<CardVariation>,
}

/// Enumerates every press of the dataset without synthesizing anything.
pub fn plan_dataset(config: &DatasetConfig) -> Result<DatasetManifest> {
    config.validate()?;
    let cards = (0..config.n_cards)
        .map(|c| CardVariation::draw(c, config.seed, &config.variation))
        .collect::<Result<Vec<_>>>()?;
    let n_cal = config.calibration_presses();
    let mut entries = Vec::with_capacity(config.n_cards as usize * config.presses_per_card());
    for card in &cards {
        let c = card.card_id;
        let source = c < config.n_source_cards;
        for b in 0..N_BUTTONS {
            for o in 0..config.n_orientations {
                for p in 0..config.presses_per_orientation {
                    let role = match (source, p < n_cal) {
                        (false, _) => Role::TargetEval,
                        (true, true) => Role::Calibration,
                        (true, false) => Role::SourceTrain,
                    };
                    entries.push(ManifestEntry {
                        id: format!("c{c:02}_b{b}_o{o}_p{p:03}"),
                        path: None,
                        card_id: c,
                        button_idx: b,
                        orientation_idx: o,
                        press_idx: p,
                        role,
                        snr_db: config.snr_db,
                        seed: task_seed(config.seed, &[c as u64, b as u64, o as u64, p as u64]),
                    });
                }
            }
        }
    }
    Ok(DatasetManifest {
        config: config.clone(),
        cards,
        entries,
    })
}

impl DatasetManifest {
    pub fn with_role(&self, role: Role) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.role == role).collect()
    }

    pub fn card(&self, card_id: u32) -> Result<&CardVariation> {
        self.cards
            .iter()
            .find(|c| c.card_id == card_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown card {card_id}")))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let header = DatasetHeader {
            config: self.config.clone(),
            cards: self.cards.clone(),
        };
        let p = dir.join(DATASET_FILE);
        let text = serde_json::to_string_pretty(&header).map_err(|e| Error::format(&p, e))?;
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        let p = dir.join(MANIFEST_FILE);
        let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        let mut w = BufWriter::new(f);
        for e in &self.entries {
            let line = serde_json::to_string(e).map_err(|err| Error::format(&p, err))?;
            writeln!(w, "{line}").map_err(|err| Error::io(&p, err))?;
        }
        w.flush().map_err(|e| Error::io(&p, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(DATASET_FILE);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let header: DatasetHeader =
            serde_json::from_str(&text).map_err(|e| Error::format(&p, e))?;
        header.config.validate()?;
        let p = dir.join(MANIFEST_FILE);
        let f = fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&p, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(&line)
                .map_err(|err| Error::format(&p, format!("line {}: {err}", i + 1)))?;
            if e.button_idx >= N_BUTTONS {
                return Err(Error::format(
                    &p,
                    format!("line {}: button out of range", i + 1),
                ));
            }
            entries.push(e);
        }
        Ok(Self {
            config: header.config,
            cards: header.cards,
            entries,
        })
    }
}

/// Receive chain from raw capture to embedding.
pub struct Pipeline {
    pub synth: Synthesizer,
    pub preprocess: PreprocessConfig,
    pub trigger: Trigger,
    pub extractor: SpectralExtractor,
    /// Replaces the spectral extractor when present.
    pub encoder: Option<EncoderWeights>,
    pub n_bits: usize,
}

/// A realized press: the stored capture and how many draws it took to sync.
pub struct Capture {
    pub trace: BasebandTrace,
    pub embedding: Vec<f64>,
    pub attempts: u32,
}

impl Pipeline {
    pub fn new(bed: Testbed, synth: SynthConfig, variation: &VariationSpec) -> Result<Self> {
        let n_bits = 8;
        let trace_len = synth.trace_len;
        let sample_rate = synth.sample_rate;
        let synth = Synthesizer::new(bed, synth, variation)?;
        let preprocess = PreprocessConfig::default();
        let reference = synth.reference_response(n_bits, &preprocess)?;
        let trigger = Trigger::new(&reference, trace_len, DEFAULT_TRIGGER_THRESHOLD)?;
        let extractor = SpectralExtractor::new(n_bits, sample_rate)?;
        Ok(Self {
            synth,
            preprocess,
            trigger,
            extractor,
            encoder: None,
            n_bits,
        })
    }

    /// Embeds with a trained encoder instead of spectral features.
    pub fn with_encoder(mut self, weights: EncoderWeights) -> Result<Self> {
        weights.validate()?;
        if weights.input_length() != self.extractor.segment_len() {
            return Err(Error::Config(format!(
                "encoder expects {} samples, segments have {}",
                weights.input_length(),
                self.extractor.segment_len()
            )));
        }
        self.encoder = Some(weights);
        Ok(self)
    }

    pub fn for_dataset(config: &DatasetConfig) -> Result<Self> {
        Self::new(
            Testbed::reference()?,
            config.synth.clone(),
            &config.variation,
        )
    }

    /// Preprocess, trigger, cut the first bits and embed.
    pub fn embed_trace(&self, trace: &BasebandTrace) -> Result<Vec<f64>> {
        let clean = preprocess(trace, &self.preprocess)?;
        let hit = self.trigger.locate(&clean.samples)?;
        let start = hit.index + self.synth.sof_len();
        let segment = extract_first_bits(&clean, start, self.n_bits)?;
        let z = match &self.encoder {
            Some(w) => w.infer(&segment.samples)?,
            None => self.extractor.extract(&segment.samples)?,
        };
        Ok(z.values)
    }

    /// Synthesizes, adds noise and embeds one press. Captures that fail to
    /// synchronize are replaced by a fresh draw.
    pub fn capture(
        &self,
        card: &CardVariation,
        entry: &ManifestEntry,
        snr_db: Option<f64>,
    ) -> Result<Capture> {
        let mut last = None;
        for attempt in 0..MAX_CAPTURE_ATTEMPTS {
            let press_seed = task_seed(entry.seed, &[attempt as u64, 0]);
            let press = self.synth.synthesize_press(
                Some(entry.button_idx),
                card,
                entry.orientation_idx,
                press_seed,
            )?;
            let trace = match snr_db {
                Some(s) => add_awgn(&press.trace, s, task_seed(entry.seed, &[attempt as u64, 1]))?,
                None => press.trace,
            };
            match self.embed_trace(&trace) {
                Ok(embedding) => {
                    return Ok(Capture {
                        trace,
                        embedding,
                        attempts: attempt + 1,
                    })
                }
                Err(e @ Error::NoSync { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Writes every trace plus the manifest. Returns the manifest with paths filled in.
pub fn generate_dataset(config: &DatasetConfig, dir: &Path) -> Result<DatasetManifest> {
    let mut manifest = plan_dataset(config)?;
    let pipeline = Pipeline::for_dataset(config)?;
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
    let cards = manifest.cards.clone();
    manifest
        .entries
        .par_iter_mut()
        .try_for_each(|e| -> Result<()> {
            let card = &cards[e.card_id as usize];
            let cap = pipeline.capture(card, e, config.snr_db)?;
            let rel = format!("traces/{}.iq", e.id);
            let mut trace = cap.trace;
            trace.meta.button_idx = Some(e.button_idx);
            trace.meta.seed = e.seed;
            trace.write(&dir.join(&rel))?;
            e.path = Some(rel);
            Ok(())
        })?;
    manifest.write(dir)?;
    Ok(manifest)
}

/// Proof that the caller is the evaluation step.
pub struct EvalCapability(());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub context: String,
    pub role: Role,
    pub count: usize,
    pub denied: bool,
}

/// Label access point with an audit trail.
#[derive(Debug, Default)]
pub struct LabelGate {
    audit: Mutex<Vec<AuditRecord>>,
}

impl LabelGate {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, context: &str, entries: &[&ManifestEntry], denied: bool) {
        let mut counts: BTreeMap<Role, usize> = BTreeMap::new();
        for e in entries {
            *counts.entry(e.role).or_default() += 1;
        }
        let mut log = self.audit.lock().expect("audit log poisoned");
        for (role, count) in counts {
            log.push(AuditRecord {
                context: context.to_string(),
                role,
                count,
                denied,
            });
        }
    }

    /// Labels of source-card entries. Any target entry denies the whole read.
    pub fn source_labels(&self, context: &str, entries: &[&ManifestEntry]) -> Result<Vec<usize>> {
        if entries.iter().any(|e| e.role == Role::TargetEval) {
            self.record(context, entries, true);
            return Err(Error::LabelAccessDenied);
        }
        self.record(context, entries, false);
        Ok(entries.iter().map(|e| e.button_idx).collect())
    }

    fn eval_labels(&self, _cap: &EvalCapability, entries: &[&ManifestEntry]) -> Vec<usize> {
        self.record("evaluate", entries, false);
        entries.iter().map(|e| e.button_idx).collect()
    }

    pub fn audit(&self) -> Vec<AuditRecord> {
        self.audit.lock().expect("audit log poisoned").clone()
    }

    /// True when no target label was ever read outside evaluation.
    pub fn target_labels_confined(&self) -> bool {
        self.audit()
            .iter()
            .all(|r| r.role != Role::TargetEval || r.context == "evaluate" || r.denied)
    }
}

/// Embeddings for a list of manifest entries, in order.
pub struct EmbeddedSet<'a> {
    pub entries: Vec<&'a ManifestEntry>,
    pub embeddings: Vec<Vec<f64>>,
    /// Extra draws needed to replace unsynchronized captures.
    pub replaced: usize,
}

/// Synthesizes and embeds entries in memory.
pub fn embed_entries<'a>(
    pipeline: &Pipeline,
    manifest: &DatasetManifest,
    entries: Vec<&'a ManifestEntry>,
    snr_db: Option<f64>,
) -> Result<EmbeddedSet<'a>> {
    let out = entries
        .par_iter()
        .map(|e| {
            let card = manifest.card(e.card_id)?;
            let cap = pipeline.capture(card, e, snr_db)?;
            Ok((cap.embedding, cap.attempts as usize - 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let replaced = out.iter().map(|o| o.1).sum();
    Ok(EmbeddedSet {
        entries,
        embeddings: out.into_iter().map(|o| o.0).collect(),
        replaced,
    })
}

/// Reads stored traces and embeds them.
pub fn embed_from_disk<'a>(
    pipeline: &Pipeline,
    dir: &Path,
    entries: Vec<&'a ManifestEntry>,
) -> Result<EmbeddedSet<'a>> {
    let embeddings = entries
        .par_iter()
        .map(|e| {
            let rel = e.path.as_ref().ok_or_else(|| {
                Error::format(
                    dir.join(MANIFEST_FILE),
                    format!("{} has no trace path", e.id),
                )
            })?;
            let trace = BasebandTrace::read(&dir.join(rel))?;
            pipeline.embed_trace(&trace)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddedSet {
        entries,
        embeddings,
        replaced: 0,
    })
}

/// Fits class statistics and threshold tables for every method on calibration embeddings.
pub fn calibrate(gate: &LabelGate, set: &EmbeddedSet, alpha: f64) -> Result<Calibration> {
    let labels = gate.source_labels("calibrate", &set.entries)?;
    let stats = fit(&set.embeddings, &labels)?;
    let tables = Metric::ALL
        .iter()
        .map(|&m| build_thresholds(&stats, m, &set.embeddings, &labels, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(Calibration { stats, tables })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ButtonRates {
    pub button: usize,
    pub genuine: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Accepted presses of this button assigned to the right class (%).
    pub ar: f64,
    /// Rejected presses of this button (%).
    pub frr: f64,
    /// Presses of other buttons accepted as this button, over all presses of other buttons (%).
    pub far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Metric,
    pub alpha: f64,
    pub snr_db: Option<f64>,
    pub n_samples: usize,
    /// Accepted and correctly classified (%).
    pub ar: f64,
    /// Accepted but assigned to the wrong button (%).
    pub far: f64,
    /// Rejected (%).
    pub frr: f64,
    pub per_button: Vec<ButtonRates>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Aggregates decision records into rates.
pub fn report_from_decisions(
    records: &[DecisionRecord],
    method: Metric,
    alpha: f64,
    snr_db: Option<f64>,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = records.len();
    let correct_acc = records
        .iter()
        .filter(|r| r.accepted == 1 && r.predicted == r.true_class)
        .count();
    let wrong_acc = records
        .iter()
        .filter(|r| r.accepted == 1 && r.predicted != r.true_class)
        .count();
    let rejected = records.iter().filter(|r| r.accepted == 0).count();
    let per_button = (0..N_BUTTONS)
        .map(|b| {
            let own: Vec<_> = records.iter().filter(|r| r.true_class == b).collect();
            let accepted = own.iter().filter(|r| r.accepted == 1).count();
            let correct = own
                .iter()
                .filter(|r| r.accepted == 1 && r.predicted == b)
                .count();
            let others = n - own.len();
            let false_acc = records
                .iter()
                .filter(|r| r.true_class != b && r.predicted == b && r.accepted == 1)
                .count();
            ButtonRates {
                button: b,
                genuine: own.len(),
                accepted,
                rejected: own.len() - accepted,
                ar: pct(correct, own.len()),
                frr: pct(own.len() - accepted, own.len()),
                far: pct(false_acc, others),
            }
        })
        .collect();
    Ok(EvalReport {
        method,
        alpha,
        snr_db,
        n_samples: n,
        ar: pct(correct_acc, n),
        far: pct(wrong_acc, n),
        frr: pct(rejected, n),
        per_button,
    })
}

/// Scores every embedding of `set` and aggregates the decisions.
pub fn evaluate(
    gate: &LabelGate,
    stats: &ClassStats,
    table: &ThresholdTable,
    set: &EmbeddedSet,
    snr_db: Option<f64>,
) -> Result<(EvalReport, Vec<DecisionRecord>)> {
    if set.entries.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let cap = EvalCapability(());
    let labels = gate.eval_labels(&cap, &set.entries);
    let records: Vec<DecisionRecord> = set
        .entries
        .par_iter()
        .zip(&set.embeddings)
        .zip(&labels)
        .map(|((e, z), &y)| {
            let d = decide_with(stats, table, z);
            DecisionRecord {
                sample_id: e.id.clone(),
                true_class: y,
                predicted: d.predicted,
                distance: d.distance,
                threshold: d.threshold,
                accepted: d.accepted as u8,
            }
        })
        .collect();
    let report = report_from_decisions(&records, table.metric, table.alpha, snr_db)?;
    Ok((report, records))
}

/// One evaluation per alpha on fixed statistics and impostor sets.
pub fn sweep_alpha(
    gate: &LabelGate,
    calibration: &Calibration,
    method: Metric,
    set: &EmbeddedSet,
    alphas: &[f64],
    snr_db: Option<f64>,
) -> Result<Vec<EvalReport>> {
    let base = calibration.table(method)?;
    alphas
        .iter()
        .map(|&a| Ok(evaluate(gate, &calibration.stats, &base.with_alpha(a)?, set, snr_db)?.0))
        .collect()
}

/// Full in-memory run: calibrate on source cards, evaluate on target cards.
pub struct RunResult {
    pub calibration: Calibration,
    pub reports: Vec<EvalReport>,
    pub replaced: usize,
}

pub fn run_protocol(
    config: &DatasetConfig,
    pipeline: &Pipeline,
    methods: &[Metric],
    alpha: f64,
    snr_db: Option<f64>,
    gate: &LabelGate,
) -> Result<RunResult> {
    let manifest = plan_dataset(config)?;
    let cal_set = embed_entries(
        pipeline,
        &manifest,
        manifest.with_role(Role::Calibration),
        snr_db,
    )?;
    let calibration = calibrate(gate, &cal_set, alpha)?;
    let eval_set = embed_entries(
        pipeline,
        &manifest,
        manifest.with_role(Role::TargetEval),
        snr_db,
    )?;
    let reports = methods
        .iter()
        .map(|&m| {
            Ok(evaluate(
                gate,
                &calibration.stats,
                calibration.table(m)?,
                &eval_set,
                snr_db,
            )?
            .0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        calibration,
        reports,
        replaced: cal_set.replaced + eval_set.replaced,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub method: Metric,
    /// AR per seed (%).
    pub ar_per_seed: Vec<f64>,
    pub ar_mean: f64,
}

/// Reruns the whole protocol at every SNR for every seed; noise is injected
/// into the raw captures before preprocessing.
pub fn sweep_snr(
    base: &DatasetConfig,
    snrs: &[f64],
    methods: &[Metric],
    seeds: &[u64],
    alpha: f64,
) -> Result<Vec<SnrPoint>> {
    let pipeline = Pipeline::for_dataset(base)?;
    let mut ar: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for &seed in seeds {
        let config = DatasetConfig {
            seed,
            ..base.clone()
        };
        for (si, &snr) in snrs.iter().enumerate() {
            let gate = LabelGate::new();
            let run = run_protocol(&config, &pipeline, methods, alpha, Some(snr), &gate)?;
            for (mi, r) in run.reports.iter().enumerate() {
                ar.entry((si, mi)).or_default().push(r.ar);
            }
        }
    }
    Ok(ar
        .into_iter()
        .map(|((si, mi), v)| SnrPoint {
            snr_db: snrs[si],
            method: methods[mi],
            ar_mean: v.iter().sum::<f64>() / v.len() as f64,
            ar_per_seed: v,
        })
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn trace_path(dir: &Path, entry: &ManifestEntry) -> Option<PathBuf> {
    entry.path.as_ref().map(|p| dir.join(p))
}
