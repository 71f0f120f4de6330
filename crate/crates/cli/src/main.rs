//! `pinpad`: dataset synthesis, physics sweeps, calibration, evaluation and plots.

mod commands;
mod config;
mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pinpad_core::recognition::Metric;
use pinpad_core::ErrorKind;

use config::{ConfigFile, RunConfig, OUT_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "pinpad",
    version,
    about = "Virtual NFC PIN pad simulator and press recognizer"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by all subcommands; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $PINPAD_OUT, else ./pinpad-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset directory (default: <out>/dataset).
    #[arg(long, global = true)]
    pub dataset_dir: Option<PathBuf>,
    /// Calibration file (default: <out>/calibration.json).
    #[arg(long, global = true)]
    pub calibration: Option<PathBuf>,
    /// Encoder weight manifest; embeddings come from the encoder instead of spectral features.
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Comma-separated alpha grid.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub snrs: Option<Vec<f64>>,
    /// Comma-separated dataset seeds for the SNR sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated methods: mahalanobis, euclidean, distribution.
    #[arg(long, global = true, value_delimiter = ',')]
    pub methods: Option<Vec<Metric>>,
    /// Dataset seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub cards: Option<u32>,
    #[arg(long, global = true)]
    pub source_cards: Option<u32>,
    /// Presses per (card, button, orientation).
    #[arg(long, global = true)]
    pub presses: Option<usize>,
    /// Dataset noise level in dB.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub snr: Option<f64>,
    /// Store noise-free captures.
    #[arg(long, global = true)]
    pub noise_free: bool,
    #[arg(long, global = true)]
    pub f_lo: Option<f64>,
    #[arg(long, global = true)]
    pub f_hi: Option<f64>,
    #[arg(long, global = true)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Synthesize the multi-card dataset (traces + manifest).
    SimulateDataset,
    /// Reader-port S11 across the band for the card alone and each button.
    SweepS11,
    /// Reader current |i1| per button and its deviation from the card-only baseline.
    SweepCurrent,
    /// Build an inventory request and print its fields and CRC.
    EncodeFrame {
        #[arg(long, value_parser = parse_hex_u8, default_value = "02")]
        flags: u8,
        #[arg(long, value_parser = parse_hex_u8, default_value = "21")]
        cmd: u8,
        #[arg(long, value_parser = parse_hex_u8)]
        afi: Option<u8>,
        #[arg(long, value_parser = parse_hex_u8, default_value = "08")]
        mask_len: u8,
        /// Mask bytes as hex, e.g. 00 or 0A1B.
        #[arg(long, default_value = "00")]
        mask: String,
    },
    /// Fit class statistics and thresholds on the calibration split.
    Calibrate {
        /// Calibration embeddings as CSV (card_id, button_idx, e0..e63) instead of the dataset.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Score the target-card split and report AR/FAR/FRR.
    Evaluate,
    /// Evaluate over the alpha grid.
    SweepAlpha,
    /// Rerun the whole protocol at each SNR and seed.
    SweepSnr,
    /// Decide a single stored trace.
    Infer {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "mahalanobis")]
        method: Metric,
    },
    /// Render a CSV produced by the sweeps as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Output file (default: input with .svg extension).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        x: Option<String>,
        /// Comma-separated y columns.
        #[arg(long, value_delimiter = ',')]
        y: Option<Vec<String>>,
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn parse_hex_u8(s: &str) -> Result<u8, String> {
    let t = s.trim_start_matches("0x").trim_start_matches("0X");
    u8::from_str_radix(t, 16).map_err(|_| format!("{s:?} is not a hex byte"))
}

/// Failure with its process exit code (2 config, 3 data, 4 numerical).
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<pinpad_core::Error> for CliError {
    fn from(e: pinpad_core::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Exclusive claim on an output directory for the lifetime of the value.
pub struct OutputLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".pinpad.lock";

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::config(format!(
                    "{} is locked by another run (remove {} if stale)",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(CliError::data(format!(
                "cannot create {}: {e}",
                path.display()
            ))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let file = match &cli.overrides.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    let cfg = RunConfig::resolve(&cli.overrides, file, env_out)?;
    commands::dispatch(&cli.command, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pinpad_core::Error;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::from(Error::Config("x".into())).code, 2);
        assert_eq!(CliError::from(Error::EmptyEvaluation).code, 3);
        assert_eq!(
            CliError::from(Error::SingularCovariance { rank: 1, dim: 2 }).code,
            4
        );
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert_eq!(
            OutputLock::acquire(dir.path()).err().map(|e| e.code),
            Some(2)
        );
        drop(lock);
        assert!(!dir.path().join(LOCK_FILE).exists());
        OutputLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn hex_bytes() {
        assert_eq!(parse_hex_u8("0x21"), Ok(0x21));
        assert!(parse_hex_u8("zz").is_err());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).unwrap_or_default();
            // A closed pipe on stdout is not a failure of the run.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
