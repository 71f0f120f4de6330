//! Open-set press recognition: class centroids, pooled covariance, whitened
//! squared Mahalanobis distances and per-class impostor-quantile thresholds.
//!
//! All distances, impostor sets and thresholds are squared distances.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative diagonal jitter tried when the pooled covariance is not positive definite.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub dim: usize,
    /// Row `c` is the centroid of class `c`.
    pub means: Vec<Vec<f64>>,
    /// Pooled within-class covariance, row-major `dim x dim`.
    pub pooled_cov: Vec<f64>,
    /// Absolute jitter added to the diagonal before factoring (0 when none was needed).
    pub jitter: f64,
    /// Lower-triangular factor of `pooled_cov + jitter I`, row-major.
    pub chol: Vec<f64>,
    pub n_per_class: Vec<usize>,
    pub total: usize,
}

fn cholesky_lower(s: &[f64], dim: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(dim, dim, s);
    let l = m.cholesky()?.unpack();
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            out[i * dim + j] = l[(i, j)];
        }
    }
    Some(out)
}

fn numerical_rank(s: &[f64], dim: usize) -> usize {
    let eig = DMatrix::from_row_slice(dim, dim, s).symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = top * dim as f64 * f64::EPSILON;
    eig.eigenvalues.iter().filter(|v| v.abs() > tol).count()
}

/// Centroids and pooled covariance from labeled calibration embeddings.
pub fn fit(x: &[Vec<f64>], labels: &[usize]) -> Result<ClassStats> {
    if x.len() != labels.len() || x.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} embeddings with {} labels",
            x.len(),
            labels.len()
        )));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidArgument(
            "embeddings must share a nonzero dimension".into(),
        ));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    let mut n_per_class = vec![0usize; n_classes];
    let mut means = vec![vec![0.0; dim]; n_classes];
    for (v, &c) in x.iter().zip(labels) {
        n_per_class[c] += 1;
        for (m, a) in means[c].iter_mut().zip(v) {
            *m += a;
        }
    }
    if let Some(c) = n_per_class.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!(
            "class {c} has no calibration samples"
        )));
    }
    for (m, &n) in means.iter_mut().zip(&n_per_class) {
        m.iter_mut().for_each(|v| *v /= n as f64);
    }
    let total = x.len();
    let mut s = vec![0.0; dim * dim];
    let mut dev = vec![0.0; dim];
    for (v, &c) in x.iter().zip(labels) {
        for ((d, a), m) in dev.iter_mut().zip(v).zip(&means[c]) {
            *d = a - m;
        }
        for i in 0..dim {
            let di = dev[i];
            let row = &mut s[i * dim..i * dim + i + 1];
            for (r, dj) in row.iter_mut().zip(&dev) {
                *r += di * dj;
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            let v = s[i * dim + j] / total as f64;
            s[i * dim + j] = v;
            s[j * dim + i] = v;
        }
    }
    let (chol, jitter) = factor_with_jitter(&s, dim)?;
    Ok(ClassStats {
        dim,
        means,
        pooled_cov: s,
        jitter,
        chol,
        n_per_class,
        total,
    })
}

fn factor_with_jitter(s: &[f64], dim: usize) -> Result<(Vec<f64>, f64)> {
    if let Some(l) = cholesky_lower(s, dim) {
        return Ok((l, 0.0));
    }
    let mean_diag = (0..dim).map(|i| s[i * dim + i]).sum::<f64>() / dim as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut reg = s.to_vec();
    for eps in JITTER_LADDER {
        let j = eps * scale;
        for i in 0..dim {
            reg[i * dim + i] = s[i * dim + i] + j;
        }
        if let Some(l) = cholesky_lower(&reg, dim) {
            return Ok((l, j));
        }
    }
    Err(Error::SingularCovariance {
        rank: numerical_rank(s, dim),
        dim,
    })
}

impl ClassStats {
    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    /// Regularized covariance actually factored.
    pub fn factored_cov(&self) -> Vec<f64> {
        let mut s = self.pooled_cov.clone();
        for i in 0..self.dim {
            s[i * self.dim + i] += self.jitter;
        }
        s
    }

    /// `||L^-1 (z - u_c)||^2` by forward substitution.
    pub fn mahalanobis_sq(&self, z: &[f64], c: usize) -> f64 {
        let mut w = vec![0.0; self.dim];
        self.mahalanobis_sq_into(z, c, &mut w)
    }

    /// As [`Self::mahalanobis_sq`] with caller-provided scratch of length `dim`.
    pub fn mahalanobis_sq_into(&self, z: &[f64], c: usize, w: &mut [f64]) -> f64 {
        let d = self.dim;
        let u = &self.means[c];
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let mut s = z[i] - u[i];
            for (l, wj) in row.iter().zip(w.iter()) {
                s -= l * wj;
            }
            let wi = s / self.chol[i * d + i];
            w[i] = wi;
            acc += wi * wi;
        }
        acc
    }

    pub fn euclidean_sq(&self, z: &[f64], c: usize) -> f64 {
        z.iter()
            .zip(&self.means[c])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Negative log-likelihood under a Gaussian with the shared per-dimension
    /// spread (diagonal of the regularized pooled covariance).
    pub fn neg_log_likelihood(&self, z: &[f64], c: usize) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let var = (self.pooled_cov[i * d + i] + self.jitter).max(f64::MIN_POSITIVE);
            let e = z[i] - self.means[c][i];
            acc += 0.5 * (e * e / var + (2.0 * std::f64::consts::PI * var).ln());
        }
        acc
    }

    pub fn score(&self, metric: Metric, z: &[f64], c: usize) -> f64 {
        match metric {
            Metric::Mahalanobis => self.mahalanobis_sq(z, c),
            Metric::Euclidean => self.euclidean_sq(z, c),
            Metric::Distribution => self.neg_log_likelihood(z, c),
        }
    }
}

pub fn mahalanobis_sq(z: &[f64], c: usize, stats: &ClassStats) -> f64 {
    stats.mahalanobis_sq(z, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mahalanobis,
    Euclidean,
    /// Shared diagonal-spread Gaussian; scores are negative log-likelihoods.
    Distribution,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mahalanobis, Metric::Euclidean, Metric::Distribution];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mahalanobis => "mahalanobis",
            Metric::Euclidean => "euclidean",
            Metric::Distribution => "distribution",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub metric: Metric,
    pub alpha: f64,
    /// Sorted impostor scores per class.
    pub impostors: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
}

/// Nearest-rank lower quantile: the `ceil(alpha n)`-th smallest of `sorted`.
pub fn nearest_rank(sorted: &[f64], alpha: f64) -> f64 {
    let k = ((alpha * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Impostor score sets (scores of every calibration sample of another class
/// against centroid `c`) and their alpha-quantile thresholds.
pub fn build_thresholds(
    stats: &ClassStats,
    metric: Metric,
    x: &[Vec<f64>],
    labels: &[usize],
    alpha: f64,
) -> Result<ThresholdTable> {
    check_alpha(alpha)?;
    let n = stats.n_classes();
    let mut impostors = vec![Vec::new(); n];
    for (z, &y) in x.iter().zip(labels) {
        for (c, set) in impostors.iter_mut().enumerate() {
            if c != y {
                set.push(stats.score(metric, z, c));
            }
        }
    }
    for (c, set) in impostors.iter_mut().enumerate() {
        if set.is_empty() {
            return Err(Error::EmptyImpostorSet(c));
        }
        set.sort_by(f64::total_cmp);
    }
    let thresholds = impostors.iter().map(|s| nearest_rank(s, alpha)).collect();
    Ok(ThresholdTable {
        metric,
        alpha,
        impostors,
        thresholds,
    })
}

impl ThresholdTable {
    /// Same impostor sets at another risk level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            metric: self.metric,
            alpha,
            impostors: self.impostors.clone(),
            thresholds: self
                .impostors
                .iter()
                .map(|s| nearest_rank(s, alpha))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub predicted: usize,
    /// Winning score (squared distance, or negative log-likelihood).
    pub distance: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// Argmin over classes (lowest index on ties), then the threshold test.
pub fn decide_with(stats: &ClassStats, table: &ThresholdTable, z: &[f64]) -> Decision {
    let mut best = (0, f64::INFINITY);
    for c in 0..stats.n_classes() {
        let d = stats.score(table.metric, z, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    let threshold = table.thresholds[best.0];
    Decision {
        predicted: best.0,
        distance: best.1,
        threshold,
        accepted: best.1 <= threshold,
    }
}

fn require(table: &ThresholdTable, metric: Metric) -> Result<()> {
    if table.metric == metric {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} thresholds passed to the {} rule",
            table.metric.name(),
            metric.name()
        )))
    }
}

pub fn decide(z: &[f64], stats: &ClassStats, thresholds: &ThresholdTable) -> Result<Decision> {
    require(thresholds, Metric::Mahalanobis)?;
    Ok(decide_with(stats, thresholds, z))
}

pub fn decide_euclidean(
    z: &[f64],
    stats: &ClassStats,
    thresholds: &ThresholdTable,
) -> Result<Decision> {
    require(thresholds, Metric::Euclidean)?;
    Ok(decide_with(stats, thresholds, z))
}

/// Accepts when the likelihood is at least the impostor-likelihood quantile,
/// i.e. when the negative log-likelihood is at most the table threshold.
pub fn decide_distribution(
    z: &[f64],
    stats: &ClassStats,
    thresholds: &ThresholdTable,
) -> Result<Decision> {
    require(thresholds, Metric::Distribution)?;
    Ok(decide_with(stats, thresholds, z))
}

/// Fitted statistics plus threshold tables, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub stats: ClassStats,
    pub tables: Vec<ThresholdTable>,
}

pub const CALIBRATION_FORMAT: &str = "pinpad-calibration";
pub const CALIBRATION_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRef {
    offset: usize,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableRecord {
    metric: Metric,
    alpha: f64,
    thresholds: Vec<f64>,
    impostors: Vec<MatrixRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationManifest {
    format: String,
    version: u32,
    /// f64 little-endian blob, relative to the manifest.
    blob: String,
    dim: usize,
    n_classes: usize,
    n_per_class: Vec<usize>,
    total: usize,
    jitter: f64,
    means: MatrixRef,
    pooled_cov: MatrixRef,
    chol: MatrixRef,
    tables: Vec<TableRecord>,
}

impl Calibration {
    pub fn table(&self, metric: Metric) -> Result<&ThresholdTable> {
        self.tables
            .iter()
            .find(|t| t.metric == metric)
            .ok_or_else(|| {
                Error::Config(format!("calibration has no {} thresholds", metric.name()))
            })
    }

    /// Writes `<path>` (JSON) and `<path>.bin` (matrices).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut blob: Vec<f64> = Vec::new();
        let mut push = |values: &[f64], shape: Vec<usize>| {
            let offset = blob.len();
            blob.extend_from_slice(values);
            MatrixRef { offset, shape }
        };
        let s = &self.stats;
        let flat_means: Vec<f64> = s.means.concat();
        let means = push(&flat_means, vec![s.n_classes(), s.dim]);
        let pooled_cov = push(&s.pooled_cov, vec![s.dim, s.dim]);
        let chol = push(&s.chol, vec![s.dim, s.dim]);
        let tables = self
            .tables
            .iter()
            .map(|t| TableRecord {
                metric: t.metric,
                alpha: t.alpha,
                thresholds: t.thresholds.clone(),
                impostors: t.impostors.iter().map(|v| push(v, vec![v.len()])).collect(),
            })
            .collect();
        let blob_name = blob_name(path);
        let manifest = CalibrationManifest {
            format: CALIBRATION_FORMAT.into(),
            version: CALIBRATION_VERSION,
            blob: blob_name.clone(),
            dim: s.dim,
            n_classes: s.n_classes(),
            n_per_class: s.n_per_class.clone(),
            total: s.total,
            jitter: s.jitter,
            means,
            pooled_cov,
            chol,
            tables,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
        let bp = sibling(path, &blob_name);
        let bytes: Vec<u8> = blob.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&bp, bytes).map_err(|e| Error::io(&bp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: CalibrationManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if m.format != CALIBRATION_FORMAT || m.version != CALIBRATION_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported format {} v{}", m.format, m.version),
            ));
        }
        let bp = sibling(path, &m.blob);
        let bytes = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::format(&bp, "blob length is not a multiple of 8"));
        }
        let blob: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let take = |r: &MatrixRef, shape: &[usize]| -> Result<Vec<f64>> {
            let n: usize = r.shape.iter().product();
            if r.shape != shape || r.offset + n > blob.len() {
                return Err(Error::format(
                    &bp,
                    format!("matrix {:?} inconsistent with {shape:?}", r.shape),
                ));
            }
            Ok(blob[r.offset..r.offset + n].to_vec())
        };
        let (d, c) = (m.dim, m.n_classes);
        let means = take(&m.means, &[c, d])?
            .chunks_exact(d.max(1))
            .map(|r| r.to_vec())
            .collect();
        let stats = ClassStats {
            dim: d,
            means,
            pooled_cov: take(&m.pooled_cov, &[d, d])?,
            jitter: m.jitter,
            chol: take(&m.chol, &[d, d])?,
            n_per_class: m.n_per_class,
            total: m.total,
        };
        let tables = m
            .tables
            .iter()
            .map(|t| {
                if t.impostors.len() != c || t.thresholds.len() != c {
                    return Err(Error::format(
                        path,
                        "threshold table does not cover every class",
                    ));
                }
                Ok(ThresholdTable {
                    metric: t.metric,
                    alpha: t.alpha,
                    impostors: t
                        .impostors
                        .iter()
                        .map(|r| take(r, &[r.shape.first().copied().unwrap_or(0)]))
                        .collect::<Result<_>>()?,
                    thresholds: t.thresholds.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { stats, tables })
    }
}

fn blob_name(path: &Path) -> String {
    let base = path
        .file_name()
        .map_or("calibration".into(), |n| n.to_string_lossy().into_owned());
    format!("{base}.bin")
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent()
        .map_or_else(|| PathBuf::from(name), |d| d.join(name))
}

/// One row of a decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub sample_id: String,
    pub true_class: usize,
    pub predicted: usize,
    pub distance: f64,
    pub threshold: f64,
    pub accepted: u8,
}

pub fn write_decisions_csv<W: Write>(rows: &[DecisionRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::format("decisions.csv", e))?;
    }
    w.flush().map_err(|e| Error::io("decisions.csv", e))
}

pub fn read_decisions_csv(path: &Path) -> Result<Vec<DecisionRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub dim: usize,
    pub n_classes: usize,
    /// Seconds per decide call.
    pub decide_s: f64,
    /// Seconds per fit with `2 d` calibration samples per class.
    pub fit_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
    /// Per-sample decide time ratio for each doubling of `dim`.
    pub decide_ratios: Vec<f64>,
    /// Fit time ratio for each doubling of `dim`.
    pub fit_ratios: Vec<f64>,
    /// Geometric-mean decide ratio per doubling over the whole range.
    pub decide_factor: f64,
    /// Geometric-mean fit ratio per doubling over the whole range.
    pub fit_factor: f64,
    /// Decide time with twice the classes over the base class count.
    pub class_ratio: f64,
}

const PROBES: usize = 1024;

fn synthetic_set(
    dim: usize,
    n_classes: usize,
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut x = Vec::with_capacity(n_classes * per_class);
    let mut y = Vec::with_capacity(n_classes * per_class);
    for c in 0..n_classes {
        let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        for _ in 0..per_class {
            x.push(
                center
                    .iter()
                    .map(|m| m + rng.random_range(-1.0..1.0))
                    .collect(),
            );
            y.push(c);
        }
    }
    (x, y)
}

/// Fastest of `reps` timed runs after one warm-up run.
fn best_of<F: FnMut()>(reps: usize, mut f: F) -> f64 {
    f();
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn time_decide(stats: &ClassStats, probes: &[Vec<f64>]) -> f64 {
    let mut w = vec![0.0; stats.dim];
    let total = best_of(7, || {
        let mut sink = 0usize;
        for z in probes {
            let mut best = (0, f64::INFINITY);
            for c in 0..stats.n_classes() {
                let d = stats.mahalanobis_sq_into(z, c, &mut w);
                if d < best.1 {
                    best = (c, d);
                }
            }
            sink = sink.wrapping_add(best.0);
        }
        std::hint::black_box(sink);
    });
    total / probes.len() as f64
}

fn probes_for(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter().cycle().step_by(7).take(PROBES).cloned().collect()
}

/// Measures per-sample decide time and fit time across embedding dimensions.
///
/// Fit uses `2 d` samples per class so covariance accumulation and the
/// factorization both grow as `d^3`. The class ratio is measured at the
/// second-largest dimension.
pub fn complexity_report(dims: &[usize], n_classes: usize, seed: u64) -> Result<ComplexityReport> {
    if dims.len() < 2 || n_classes < 2 {
        return Err(Error::InvalidArgument(
            "need two or more dimensions and classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &dim in dims {
        let (x, y) = synthetic_set(dim, n_classes, 2 * dim, &mut rng);
        let stats = fit(&x, &y)?;
        let decide_s = time_decide(&stats, &probes_for(&x));
        let fit_s = best_of(5, || {
            std::hint::black_box(fit(&x, &y).ok());
        });
        rows.push(ComplexityRow {
            dim,
            n_classes,
            decide_s,
            fit_s,
        });
    }
    let ratios = |f: fn(&ComplexityRow) -> f64| -> Vec<f64> {
        rows.windows(2)
            .map(|w| (f(&w[1]) / f(&w[0])).powf(1.0 / (w[1].dim as f64 / w[0].dim as f64).log2()))
            .collect()
    };
    let overall = |f: fn(&ComplexityRow) -> f64| -> f64 {
        let (a, b) = (&rows[0], &rows[rows.len() - 1]);
        (f(b) / f(a)).powf(1.0 / (b.dim as f64 / a.dim as f64).log2())
    };
    let decide_ratios = ratios(|r| r.decide_s);
    let fit_ratios = ratios(|r| r.fit_s);
    let decide_factor = overall(|r| r.decide_s);
    let fit_factor = overall(|r| r.fit_s);
    let dim = dims[dims.len() - 2];
    let mut per_class = Vec::new();
    for c in [n_classes, 2 * n_classes] {
        let (x, y) = synthetic_set(dim, c, 2 * dim, &mut rng);
        let stats = fit(&x, &y)?;
        per_class.push(time_decide(&stats, &probes_for(&x)));
    }
    Ok(ComplexityReport {
        rows,
        decide_ratios,
        fit_ratios,
        decide_factor,
        fit_factor,
        class_ratio: per_class[1] / per_class[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_definition() {
        let d: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&d, 0.05), 5.0);
        assert_eq!(nearest_rank(&d, 0.001), 1.0);
    }

    #[test]
    fn one_dimensional_sanity() {
        let x = vec![vec![0.0], vec![0.0], vec![2.0], vec![2.0]];
        let s = fit(&x, &[0, 0, 1, 1]).unwrap();
        assert_eq!(s.means, vec![vec![0.0], vec![2.0]]);
        assert_eq!(s.pooled_cov, vec![0.0]);
        assert!(s.jitter > 0.0);
    }

    #[test]
    fn identity_and_scaled_reductions() {
        let dim = 64;
        let mut s = ClassStats {
            dim,
            means: vec![vec![0.0; dim]; 2],
            pooled_cov: vec![0.0; dim * dim],
            jitter: 0.0,
            chol: vec![0.0; dim * dim],
            n_per_class: vec![1, 1],
            total: 2,
        };
        for i in 0..dim {
            s.chol[i * dim + i] = 1.0;
        }
        let mut z = vec![0.0; dim];
        z[0] = 3.0;
        z[1] = 4.0;
        assert_eq!(s.mahalanobis_sq(&z, 0), 25.0);
        s.chol[0] = 2.0;
        let mut z = vec![0.0; dim];
        z[0] = 2.0;
        assert_eq!(s.mahalanobis_sq(&z, 0), 1.0);
    }

    #[test]
    fn calibration_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = synthetic_set(5, 3, 12, &mut rng);
        let stats = fit(&x, &y).unwrap();
        let tables = Metric::ALL
            .iter()
            .map(|&m| build_thresholds(&stats, m, &x, &y, 0.1).unwrap())
            .collect();
        let cal = Calibration { stats, tables };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cal.json");
        cal.save(&p).unwrap();
        assert_eq!(Calibration::load(&p).unwrap(), cal);
    }
}
