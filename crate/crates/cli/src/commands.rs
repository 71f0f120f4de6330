use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use pinpad_core::circuit::{
    card_resonance, frequency_grid, reader_current_per_button, reflection_sweep, write_s11_csv,
    Testbed, ACTIVATION_BAND_HZ,
};
use pinpad_core::encoder::EncoderWeights;
use pinpad_core::features::read_embeddings_csv;
use pinpad_core::harness::{
    calibrate, embed_from_disk, evaluate, generate_dataset, sweep_alpha, sweep_snr, write_json,
    DatasetConfig, DatasetManifest, LabelGate, Pipeline, Role,
};
use pinpad_core::iso15693::{encode_inventory, InventoryRequest};
use pinpad_core::recognition::{
    build_thresholds, decide_with, fit, write_decisions_csv, Calibration, Metric,
};
use pinpad_core::synth::BasebandTrace;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::plot::{load_series, render_svg, PlotSpec};
use crate::{CliError, Command, OutputLock};

type Out = Result<Value, CliError>;

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Out {
    match command {
        Command::EncodeFrame {
            flags,
            cmd,
            afi,
            mask_len,
            mask,
        } => encode_frame(*flags, *cmd, *afi, *mask_len, mask),
        Command::Infer { trace, method } => infer(cfg, trace, *method),
        Command::Plot {
            input,
            output,
            x,
            y,
            group,
            title,
        } => {
            let spec = match (x, y) {
                (Some(x), Some(y)) => Some(PlotSpec {
                    x: x.clone(),
                    y: y.clone(),
                    group: group.clone(),
                }),
                (None, None) => None,
                _ => return Err(CliError::config("--x and --y go together")),
            };
            plot(input, output.as_deref(), spec, title.as_deref())
        }
        other => {
            let _lock = OutputLock::acquire(&cfg.out_dir)?;
            match other {
                Command::SimulateDataset => simulate_dataset(cfg),
                Command::SweepS11 => sweep_s11(cfg),
                Command::SweepCurrent => sweep_current(cfg),
                Command::Calibrate { embeddings } => match embeddings {
                    Some(path) => calibrate_from_csv(cfg, path),
                    None => run_calibrate(cfg),
                },
                Command::Evaluate => run_evaluate(cfg),
                Command::SweepAlpha => run_sweep_alpha(cfg),
                Command::SweepSnr => run_sweep_snr(cfg),
                _ => unreachable!("handled above"),
            }
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn pipeline(config: &DatasetConfig, weights: Option<&Path>) -> Result<Pipeline, CliError> {
    let p = Pipeline::for_dataset(config)?;
    Ok(match weights {
        Some(w) => p.with_encoder(EncoderWeights::load(w)?)?,
        None => p,
    })
}

fn simulate_dataset(cfg: &RunConfig) -> Out {
    let m = generate_dataset(&cfg.dataset, &cfg.dataset_dir)?;
    Ok(json!({
        "command": "simulate-dataset",
        "dataset_dir": cfg.dataset_dir,
        "entries": m.entries.len(),
        "source_train": m.with_role(Role::SourceTrain).len(),
        "calibration": m.with_role(Role::Calibration).len(),
        "target_eval": m.with_role(Role::TargetEval).len(),
        "cards": m.cards.len(),
        "snr_db": m.config.snr_db,
    }))
}

fn sweep_s11(cfg: &RunConfig) -> Out {
    let bed = Testbed::reference()?;
    let (lo, hi, n) = (cfg.f_lo_hz, cfg.f_hi_hz, cfg.n_points);
    let mut sweeps = vec![reflection_sweep(&bed, lo, hi, n, None)?];
    for b in 0..9 {
        sweeps.push(reflection_sweep(&bed, lo, hi, n, Some(b))?);
    }
    let path = cfg.out_dir.join("s11.csv");
    let mut w = create(&path)?;
    write_s11_csv(&sweeps, &mut w).map_err(|e| io_err(&path, e))?;
    w.flush().map_err(|e| io_err(&path, e))?;

    let max_abs = sweeps
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.s11.norm()))
        .fold(0.0, f64::max);
    let mut distinct = true;
    for i in 1..sweeps.len() {
        for j in i + 1..sweeps.len() {
            if sweeps[i].points == sweeps[j].points {
                distinct = false;
            }
        }
    }
    let fine = frequency_grid(12.0e6, 15.5e6, 7001)?;
    let baseline = card_resonance(&bed, &bed.coupling_factors(None, [0.0; 3])?, false, &fine)?;
    let per_button = bed
        .button_factors()?
        .iter()
        .map(|k| card_resonance(&bed, k, true, &fine))
        .collect::<Result<Vec<_>, _>>()?;
    let (band_lo, band_hi) = ACTIVATION_BAND_HZ;
    let in_band = per_button.iter().all(|&f| f > band_lo && f < band_hi);
    Ok(json!({
        "command": "sweep-s11",
        "csv": path,
        "points": n,
        "max_abs_s11": max_abs,
        "buttons_pairwise_distinct": distinct,
        "card_resonance_baseline_hz": baseline,
        "card_resonance_hz": per_button,
        "card_resonance_in_band": in_band,
    }))
}

fn sweep_current(cfg: &RunConfig) -> Out {
    let bed = Testbed::reference()?;
    let grid = frequency_grid(cfg.f_lo_hz, cfg.f_hi_hz, cfg.n_points)?;
    let sweep = reader_current_per_button(&bed, &grid)?;
    let path = cfg.out_dir.join("current.csv");
    let mut w = create(&path)?;
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "f_Hz,button_idx,i1_abs,deviation,relative_deviation")?;
        for (i, f) in sweep.f_hz.iter().enumerate() {
            writeln!(w, "{f},-1,{},0,0", sweep.baseline[i])?;
        }
        for b in 0..sweep.per_button.len() {
            let dev = sweep.deviation(b);
            let rel = sweep.relative_deviation(b);
            for (i, f) in sweep.f_hz.iter().enumerate() {
                writeln!(
                    w,
                    "{f},{b},{},{},{}",
                    sweep.per_button[b][i], dev[i], rel[i]
                )?;
            }
        }
        w.flush()
    };
    emit().map_err(|e| io_err(&path, e))?;
    let max_dev: Vec<f64> = (0..sweep.per_button.len())
        .map(|b| sweep.max_abs_deviation(b))
        .collect();
    Ok(json!({
        "command": "sweep-current",
        "csv": path,
        "points": grid.len(),
        "max_abs_deviation_a": max_dev,
    }))
}

fn parse_hex_bytes(s: &str) -> Result<Vec<u8>, CliError> {
    let t = s.trim_start_matches("0x");
    if t.len() % 2 != 0 {
        return Err(CliError::config(format!(
            "mask {s:?} has an odd number of hex digits"
        )));
    }
    (0..t.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&t[i..i + 2], 16)
                .map_err(|_| CliError::config(format!("mask {s:?} is not hex")))
        })
        .collect()
}

fn encode_frame(flags: u8, command: u8, afi: Option<u8>, mask_len: u8, mask: &str) -> Out {
    let req = InventoryRequest {
        flags,
        command,
        afi,
        mask_len,
        mask: parse_hex_bytes(mask)?,
    };
    req.validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    let frame = encode_inventory(&req)?;
    let fields = req.fields();
    let width = fields.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (name, value) in &fields {
        eprintln!("{name:<width$}  {value}");
    }
    Ok(json!({
        "command": "encode-frame",
        "fields": fields.iter().map(|(n, v)| json!({"field": n, "value": v})).collect::<Vec<_>>(),
        "crc": format!("0x{:04X}", req.crc()),
        "wire_hex": req.to_hex(),
        "payload_bits": frame.payload_bit_len(),
    }))
}

fn run_calibrate(cfg: &RunConfig) -> Out {
    let manifest = DatasetManifest::read(&cfg.dataset_dir)?;
    let pipe = pipeline(&manifest.config, cfg.weights.as_deref())?;
    let gate = LabelGate::new();
    let set = embed_from_disk(
        &pipe,
        &cfg.dataset_dir,
        manifest.with_role(Role::Calibration),
    )?;
    let cal = calibrate(&gate, &set, cfg.alpha)?;
    if let Some(parent) = cfg.calibration.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    cal.save(&cfg.calibration)?;
    let thresholds: serde_json::Map<String, Value> = cal
        .tables
        .iter()
        .map(|t| (t.metric.name().to_string(), json!(t.thresholds)))
        .collect();
    Ok(json!({
        "command": "calibrate",
        "calibration": cfg.calibration,
        "embedding": if cfg.weights.is_some() { "encoder" } else { "spectral" },
        "n_samples": set.entries.len(),
        "dim": cal.stats.dim,
        "jitter": cal.stats.jitter,
        "alpha": cfg.alpha,
        "thresholds": thresholds,
    }))
}

fn calibrate_from_csv(cfg: &RunConfig, path: &Path) -> Out {
    let rows = read_embeddings_csv(path)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
    let y: Vec<usize> = rows.iter().map(|r| r.button_idx).collect();
    let stats = fit(&x, &y)?;
    let tables = Metric::ALL
        .iter()
        .map(|&m| build_thresholds(&stats, m, &x, &y, cfg.alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let cal = Calibration { stats, tables };
    if let Some(parent) = cfg.calibration.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    cal.save(&cfg.calibration)?;
    Ok(json!({
        "command": "calibrate",
        "calibration": cfg.calibration,
        "embedding": "csv",
        "source": path,
        "n_samples": rows.len(),
        "dim": cal.stats.dim,
        "jitter": cal.stats.jitter,
        "alpha": cfg.alpha,
    }))
}

fn run_evaluate(cfg: &RunConfig) -> Out {
    let manifest = DatasetManifest::read(&cfg.dataset_dir)?;
    let pipe = pipeline(&manifest.config, cfg.weights.as_deref())?;
    let cal = Calibration::load(&cfg.calibration)?;
    let gate = LabelGate::new();
    let set = embed_from_disk(
        &pipe,
        &cfg.dataset_dir,
        manifest.with_role(Role::TargetEval),
    )?;
    let mut reports = Vec::new();
    for &m in &cfg.methods {
        let table = cal.table(m)?.with_alpha(cfg.alpha)?;
        let (report, records) = evaluate(&gate, &cal.stats, &table, &set, manifest.config.snr_db)?;
        write_json(
            &cfg.out_dir.join(format!("eval_{}.json", m.name())),
            &report,
        )?;
        let path = cfg.out_dir.join(format!("decisions_{}.csv", m.name()));
        write_decisions_csv(&records, create(&path)?)?;
        reports.push(report);
    }
    write_json(&cfg.out_dir.join("label_audit.json"), &gate.audit())?;
    Ok(json!({
        "command": "evaluate",
        "alpha": cfg.alpha,
        "reports": reports,
        "target_labels_confined": gate.target_labels_confined(),
    }))
}

fn run_sweep_alpha(cfg: &RunConfig) -> Out {
    let manifest = DatasetManifest::read(&cfg.dataset_dir)?;
    let pipe = pipeline(&manifest.config, cfg.weights.as_deref())?;
    let cal = Calibration::load(&cfg.calibration)?;
    let gate = LabelGate::new();
    let set = embed_from_disk(
        &pipe,
        &cfg.dataset_dir,
        manifest.with_role(Role::TargetEval),
    )?;
    let path = cfg.out_dir.join("alpha_sweep.csv");
    let mut w = create(&path)?;
    writeln!(w, "method,alpha,ar,far,frr").map_err(|e| io_err(&path, e))?;
    let mut all = Vec::new();
    for &m in &cfg.methods {
        let reports = sweep_alpha(
            &gate,
            &cal,
            m,
            &set,
            &cfg.alpha_grid,
            manifest.config.snr_db,
        )?;
        for r in &reports {
            writeln!(w, "{},{},{},{},{}", m.name(), r.alpha, r.ar, r.far, r.frr)
                .map_err(|e| io_err(&path, e))?;
        }
        all.extend(reports);
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    write_json(&cfg.out_dir.join("alpha_sweep.json"), &all)?;
    Ok(json!({
        "command": "sweep-alpha",
        "csv": path,
        "points": all.iter().map(|r| json!({
            "method": r.method, "alpha": r.alpha, "ar": r.ar, "far": r.far, "frr": r.frr,
        })).collect::<Vec<_>>(),
    }))
}

fn run_sweep_snr(cfg: &RunConfig) -> Out {
    if cfg.weights.is_some() {
        return Err(CliError::config(
            "sweep-snr runs on spectral features; drop --weights",
        ));
    }
    let points = sweep_snr(
        &cfg.dataset,
        &cfg.snr_grid,
        &cfg.methods,
        &cfg.seeds,
        cfg.alpha,
    )?;
    let path = cfg.out_dir.join("snr_sweep.csv");
    let mut w = create(&path)?;
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "method,snr_db,ar_mean,ar_per_seed")?;
        for p in &points {
            let seeds: Vec<String> = p.ar_per_seed.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{}",
                p.method.name(),
                p.snr_db,
                p.ar_mean,
                seeds.join(";")
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(&path, e))?;
    write_json(&cfg.out_dir.join("snr_sweep.json"), &points)?;
    Ok(json!({
        "command": "sweep-snr",
        "csv": path,
        "seeds": cfg.seeds,
        "points": points,
    }))
}

fn infer(cfg: &RunConfig, trace_path: &Path, method: Metric) -> Out {
    let trace = BasebandTrace::read(trace_path)?;
    let pipe = pipeline(&cfg.dataset, cfg.weights.as_deref())?;
    let z = pipe.embed_trace(&trace)?;
    let cal = Calibration::load(&cfg.calibration)?;
    let table = cal.table(method)?.with_alpha(cfg.alpha)?;
    let d = decide_with(&cal.stats, &table, &z);
    Ok(json!({
        "command": "infer",
        "trace": trace_path,
        "method": method,
        "alpha": cfg.alpha,
        "predicted": d.predicted,
        "distance": d.distance,
        "threshold": d.threshold,
        "accepted": d.accepted,
        "decision": if d.accepted { "accept" } else { "re-enter" },
    }))
}

fn plot(input: &Path, output: Option<&Path>, spec: Option<PlotSpec>, title: Option<&str>) -> Out {
    let (spec, series) = load_series(input, spec)?;
    let default_title = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("plot")
        .to_string();
    let svg = render_svg(
        &series,
        title.unwrap_or(&default_title),
        &spec.x,
        &spec.y.join(", "),
    )?;
    let out = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.with_extension("svg"));
    let mut w = create(&out)?;
    w.write_all(svg.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&out, e))?;
    Ok(json!({
        "command": "plot",
        "svg": out,
        "series": series.len(),
    }))
}
