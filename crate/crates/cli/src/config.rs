use std::path::{Path, PathBuf};

use pinpad_core::harness::{DatasetConfig, ALPHA_GRID, DEFAULT_ALPHA, SNR_GRID_DB};
use pinpad_core::recognition::Metric;
use serde::Deserialize;

use crate::{CliError, Overrides};

/// Default output root when neither `--out` nor the config file sets one.
pub const OUT_ENV: &str = "PINPAD_OUT";
pub const DEFAULT_OUT: &str = "pinpad-out";

/// TOML settings file. Every key is optional; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub out_dir: Option<PathBuf>,
    pub dataset_dir: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub alpha_grid: Option<Vec<f64>>,
    pub snr_grid: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub methods: Option<Vec<Metric>>,
    pub seed: Option<u64>,
    pub n_cards: Option<u32>,
    pub n_source_cards: Option<u32>,
    pub presses_per_orientation: Option<usize>,
    pub snr_db: Option<f64>,
    pub noise_free: Option<bool>,
    pub f_lo_hz: Option<f64>,
    pub f_hi_hz: Option<f64>,
    pub n_points: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub dataset_dir: PathBuf,
    pub calibration: PathBuf,
    pub weights: Option<PathBuf>,
    pub alpha: f64,
    pub alpha_grid: Vec<f64>,
    pub snr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Metric>,
    pub dataset: DatasetConfig,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub n_points: usize,
}

impl RunConfig {
    pub fn resolve(
        flags: &Overrides,
        file: ConfigFile,
        env_out: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let out_dir = flags
            .out
            .clone()
            .or(file.out_dir)
            .or(env_out)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let dataset_dir = flags
            .dataset_dir
            .clone()
            .or(file.dataset_dir)
            .unwrap_or_else(|| out_dir.join("dataset"));
        let calibration = flags
            .calibration
            .clone()
            .or(file.calibration)
            .unwrap_or_else(|| out_dir.join("calibration.json"));
        let mut dataset = DatasetConfig::default();
        if let Some(v) = flags.seed.or(file.seed) {
            dataset.seed = v;
        }
        if let Some(v) = flags.cards.or(file.n_cards) {
            dataset.n_cards = v;
        }
        if let Some(v) = flags.source_cards.or(file.n_source_cards) {
            dataset.n_source_cards = v;
        }
        if let Some(v) = flags.presses.or(file.presses_per_orientation) {
            dataset.presses_per_orientation = v;
        }
        if let Some(v) = flags.snr.or(file.snr_db) {
            dataset.snr_db = Some(v);
        }
        if flags.noise_free || file.noise_free == Some(true) {
            dataset.snr_db = None;
        }
        let cfg = Self {
            out_dir,
            dataset_dir,
            calibration,
            weights: flags.weights.clone().or(file.weights),
            alpha: flags.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
            alpha_grid: flags
                .alphas
                .clone()
                .or(file.alpha_grid)
                .unwrap_or_else(|| ALPHA_GRID.to_vec()),
            snr_grid: flags
                .snrs
                .clone()
                .or(file.snr_grid)
                .unwrap_or_else(|| SNR_GRID_DB.to_vec()),
            seeds: flags
                .seeds
                .clone()
                .or(file.seeds)
                .unwrap_or_else(|| vec![0, 1, 2]),
            methods: flags
                .methods
                .clone()
                .or(file.methods)
                .unwrap_or_else(|| Metric::ALL.to_vec()),
            dataset,
            f_lo_hz: flags.f_lo.or(file.f_lo_hz).unwrap_or(13.06e6),
            f_hi_hz: flags.f_hi.or(file.f_hi_hz).unwrap_or(14.06e6),
            n_points: flags.points.or(file.n_points).unwrap_or(1001),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let unit = |a: f64| a > 0.0 && a < 1.0;
        if !unit(self.alpha) {
            return Err(CliError::config(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if self.alpha_grid.is_empty() || !self.alpha_grid.iter().all(|&a| unit(a)) {
            return Err(CliError::config(
                "alpha grid must be non-empty with values in (0, 1)",
            ));
        }
        if self.snr_grid.is_empty() || !self.snr_grid.iter().all(|s| s.is_finite()) {
            return Err(CliError::config("SNR grid must be non-empty and finite"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("at least one seed is required"));
        }
        if self.methods.is_empty() {
            return Err(CliError::config("at least one method is required"));
        }
        if !(self.f_lo_hz > 0.0 && self.f_lo_hz < self.f_hi_hz) || self.n_points < 2 {
            return Err(CliError::config(format!(
                "sweep needs 0 < f_lo < f_hi and at least 2 points, got {}..{} with {}",
                self.f_lo_hz, self.f_hi_hz, self.n_points
            )));
        }
        self.dataset.validate().map_err(CliError::from)
    }
}
