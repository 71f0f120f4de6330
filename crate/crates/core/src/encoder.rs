//! Forward pass of the externally trained temporal encoder.
//!
//! Weights arrive as a JSON manifest listing layers in execution order plus
//! a blob of little-endian f32 tensors. Tensor layouts follow the usual
//! deep-learning conventions: conv weights `[out, in, kernel]`, dense weights
//! `[out, in]`, LSTM weights `[4 * hidden, input]` with gates in `i f g o` order.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EmbeddingSource, EmbeddingVector, EMBEDDING_DIM};

pub const FORMAT_NAME: &str = "pinpad-encoder";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRef {
    /// Offset into the blob, in f32 elements.
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorRef {
    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        weight: TensorRef,
        bias: TensorRef,
    },
    BatchNorm {
        name: String,
        channels: usize,
        eps: f64,
        weight: TensorRef,
        bias: TensorRef,
        running_mean: TensorRef,
        running_var: TensorRef,
    },
    Relu {
        name: String,
    },
    MaxPool {
        name: String,
        size: usize,
        stride: usize,
    },
    Lstm {
        name: String,
        input_size: usize,
        hidden_size: usize,
        weight_ih: TensorRef,
        weight_hh: TensorRef,
        bias_ih: TensorRef,
        bias_hh: TensorRef,
    },
    GlobalAvgPool {
        name: String,
    },
    Dense {
        name: String,
        in_features: usize,
        out_features: usize,
        weight: TensorRef,
        bias: TensorRef,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv1d { name, .. }
            | LayerSpec::BatchNorm { name, .. }
            | LayerSpec::Relu { name }
            | LayerSpec::MaxPool { name, .. }
            | LayerSpec::Lstm { name, .. }
            | LayerSpec::GlobalAvgPool { name }
            | LayerSpec::Dense { name, .. } => name,
        }
    }

    fn tensors(&self) -> Vec<(&'static str, &TensorRef)> {
        match self {
            LayerSpec::Conv1d { weight, bias, .. } | LayerSpec::Dense { weight, bias, .. } => {
                vec![("weight", weight), ("bias", bias)]
            }
            LayerSpec::BatchNorm {
                weight,
                bias,
                running_mean,
                running_var,
                ..
            } => vec![
                ("weight", weight),
                ("bias", bias),
                ("running_mean", running_mean),
                ("running_var", running_var),
            ],
            LayerSpec::Lstm {
                weight_ih,
                weight_hh,
                bias_ih,
                bias_hh,
                ..
            } => vec![
                ("weight_ih", weight_ih),
                ("weight_hh", weight_hh),
                ("bias_ih", bias_ih),
                ("bias_hh", bias_hh),
            ],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    /// `iq`: channel 0 real part, channel 1 imaginary part.
    pub representation: String,
    pub channels: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderManifest {
    pub format: String,
    pub version: u32,
    pub input: InputSpec,
    /// `same`: zero padding of `(kernel - 1) / 2` on both sides.
    pub conv_padding: String,
    /// `zeros`.
    pub lstm_initial_state: String,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub layers: Vec<LayerSpec>,
    /// Free-form training record from the producer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<serde_json::Value>,
}

/// Accumulates tensors into a blob while a manifest is assembled.
#[derive(Debug, Default, Clone)]
pub struct BlobWriter {
    pub data: Vec<f32>,
}

impl BlobWriter {
    pub fn push(&mut self, shape: &[usize], values: &[f32]) -> TensorRef {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "tensor shape/value mismatch"
        );
        let offset = self.data.len();
        self.data.extend_from_slice(values);
        TensorRef {
            offset,
            shape: shape.to_vec(),
        }
    }
}

/// Validated manifest with its tensors loaded.
#[derive(Debug, Clone)]
pub struct EncoderWeights {
    pub manifest: EncoderManifest,
    blob: Vec<f64>,
}

fn shape_err(layer: usize, spec: &LayerSpec, reason: impl Into<String>) -> Error {
    Error::Shape {
        layer,
        name: spec.name().to_string(),
        reason: reason.into(),
    }
}

impl EncoderWeights {
    pub fn from_parts(manifest: EncoderManifest, blob: &[f32]) -> Result<Self> {
        let w = Self {
            manifest,
            blob: blob.iter().map(|&v| v as f64).collect(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: EncoderManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(manifest_path, e))?;
        let blob_path = blob_path(manifest_path, &manifest.blob);
        let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::format(
                &blob_path,
                "blob length is not a multiple of 4",
            ));
        }
        let blob: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_parts(manifest, &blob)
    }

    /// Writes the manifest and its blob next to it.
    pub fn save(manifest: &EncoderManifest, blob: &[f32], manifest_path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(manifest).map_err(|e| Error::format(manifest_path, e))?;
        fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
        let blob_path = blob_path(manifest_path, &manifest.blob);
        let bytes: Vec<u8> = blob.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&blob_path, bytes).map_err(|e| Error::io(&blob_path, e))
    }

    pub fn input_length(&self) -> usize {
        self.manifest.input.length
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        let top = |reason: String| Error::Shape {
            layer: 0,
            name: "manifest".into(),
            reason,
        };
        if m.format != FORMAT_NAME || m.version != FORMAT_VERSION {
            return Err(top(format!(
                "unsupported format {} v{} (expected {FORMAT_NAME} v{FORMAT_VERSION})",
                m.format, m.version
            )));
        }
        if m.input.representation != "iq" || m.input.channels != 2 || m.input.length == 0 {
            return Err(top(format!("unsupported input {:?}", m.input)));
        }
        if m.conv_padding != "same" || m.lstm_initial_state != "zeros" {
            return Err(top(format!(
                "unsupported conv padding {:?} or LSTM initial state {:?}",
                m.conv_padding, m.lstm_initial_state
            )));
        }
        // Walk shapes: Some(len) while the activation is a sequence, None once pooled to a vector.
        let mut channels = m.input.channels;
        let mut length = Some(m.input.length);
        for (i, layer) in m.layers.iter().enumerate() {
            for (tname, t) in layer.tensors() {
                if t.offset + t.numel() > self.blob.len() {
                    return Err(shape_err(
                        i,
                        layer,
                        format!("tensor {tname} runs past the end of the blob"),
                    ));
                }
            }
            let expect = |t: &TensorRef, tname: &str, shape: &[usize]| -> Result<()> {
                if t.shape != shape {
                    return Err(shape_err(
                        i,
                        layer,
                        format!("tensor {tname} has shape {:?}, expected {shape:?}", t.shape),
                    ));
                }
                Ok(())
            };
            let seq = |what: &str| -> Result<usize> {
                length.ok_or_else(|| shape_err(i, layer, format!("{what} needs a sequence input")))
            };
            match layer {
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    weight,
                    bias,
                    ..
                } => {
                    seq("conv1d")?;
                    if *in_channels != channels {
                        return Err(shape_err(
                            i,
                            layer,
                            format!("expects {in_channels} channels, receives {channels}"),
                        ));
                    }
                    if kernel % 2 == 0 {
                        return Err(shape_err(i, layer, "same padding needs an odd kernel"));
                    }
                    expect(weight, "weight", &[*out_channels, *in_channels, *kernel])?;
                    expect(bias, "bias", &[*out_channels])?;
                    channels = *out_channels;
                }
                LayerSpec::BatchNorm {
                    channels: c,
                    eps,
                    weight,
                    bias,
                    running_mean,
                    running_var,
                    ..
                } => {
                    if *c != channels {
                        return Err(shape_err(
                            i,
                            layer,
                            format!("expects {c} channels, receives {channels}"),
                        ));
                    }
                    if !(*eps > 0.0) {
                        return Err(shape_err(i, layer, "eps must be positive"));
                    }
                    for (t, n) in [
                        (weight, "weight"),
                        (bias, "bias"),
                        (running_mean, "running_mean"),
                        (running_var, "running_var"),
                    ] {
                        expect(t, n, &[channels])?;
                    }
                    let var = &self.blob[running_var.offset..running_var.offset + channels];
                    if var.iter().any(|v| !(*v >= 0.0)) {
                        return Err(shape_err(i, layer, "negative running variance"));
                    }
                }
                LayerSpec::Relu { .. } => {}
                LayerSpec::MaxPool { size, stride, .. } => {
                    let l = seq("max_pool")?;
                    if *size == 0 || *stride == 0 || l < *size {
                        return Err(shape_err(
                            i,
                            layer,
                            format!("pool {size}/{stride} on length {l}"),
                        ));
                    }
                    length = Some((l - size) / stride + 1);
                }
                LayerSpec::Lstm {
                    input_size,
                    hidden_size,
                    weight_ih,
                    weight_hh,
                    bias_ih,
                    bias_hh,
                    ..
                } => {
                    seq("lstm")?;
                    if *input_size != channels {
                        return Err(shape_err(
                            i,
                            layer,
                            format!("expects {input_size} inputs, receives {channels}"),
                        ));
                    }
                    let g = 4 * hidden_size;
                    expect(weight_ih, "weight_ih", &[g, *input_size])?;
                    expect(weight_hh, "weight_hh", &[g, *hidden_size])?;
                    expect(bias_ih, "bias_ih", &[g])?;
                    expect(bias_hh, "bias_hh", &[g])?;
                    channels = *hidden_size;
                }
                LayerSpec::GlobalAvgPool { .. } => {
                    seq("global_avg_pool")?;
                    length = None;
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                    weight,
                    bias,
                    ..
                } => {
                    if length.is_some() {
                        return Err(shape_err(i, layer, "dense needs a pooled vector input"));
                    }
                    if *in_features != channels {
                        return Err(shape_err(
                            i,
                            layer,
                            format!("expects {in_features} inputs, receives {channels}"),
                        ));
                    }
                    expect(weight, "weight", &[*out_features, *in_features])?;
                    expect(bias, "bias", &[*out_features])?;
                    channels = *out_features;
                }
            }
        }
        let last = m.layers.len().saturating_sub(1);
        if length.is_some() || channels != EMBEDDING_DIM {
            return Err(Error::Shape {
                layer: last,
                name: m.layers.last().map_or("none", |l| l.name()).to_string(),
                reason: format!(
                    "network output is {} x {channels}, expected a {EMBEDDING_DIM}-vector",
                    length.map_or("vector".to_string(), |l| format!("sequence of {l}"))
                ),
            });
        }
        Ok(())
    }

    fn tensor(&self, t: &TensorRef) -> &[f64] {
        &self.blob[t.offset..t.offset + t.numel()]
    }

    /// Runs the network on one segment.
    pub fn infer(&self, segment: &[Complex64]) -> Result<EmbeddingVector> {
        let len = self.manifest.input.length;
        if segment.len() != len {
            return Err(Error::SegmentLength {
                expected: len,
                actual: segment.len(),
            });
        }
        // Time-major activations: x[t * c + ch].
        let mut c = 2;
        let mut t_len = len;
        let mut x: Vec<f64> = segment.iter().flat_map(|s| [s.re, s.im]).collect();
        for layer in &self.manifest.layers {
            match layer {
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    weight,
                    bias,
                    ..
                } => {
                    let (ci, co, k) = (*in_channels, *out_channels, *kernel);
                    let w = self.tensor(weight);
                    let b = self.tensor(bias);
                    let pad = (k - 1) / 2;
                    let mut y = vec![0.0; t_len * co];
                    for t in 0..t_len {
                        let out = &mut y[t * co..(t + 1) * co];
                        out.copy_from_slice(b);
                        for j in 0..k {
                            let src = t + j;
                            if src < pad || src - pad >= t_len {
                                continue;
                            }
                            let xin = &x[(src - pad) * ci..(src - pad + 1) * ci];
                            for (o, acc) in out.iter_mut().enumerate() {
                                let wrow = &w[o * ci * k..(o + 1) * ci * k];
                                let mut s = 0.0;
                                for (i, xv) in xin.iter().enumerate() {
                                    s += wrow[i * k + j] * xv;
                                }
                                *acc += s;
                            }
                        }
                    }
                    x = y;
                    c = co;
                }
                LayerSpec::BatchNorm {
                    eps,
                    weight,
                    bias,
                    running_mean,
                    running_var,
                    ..
                } => {
                    let (g, b) = (self.tensor(weight), self.tensor(bias));
                    let (mu, var) = (self.tensor(running_mean), self.tensor(running_var));
                    let scale: Vec<f64> = (0..c).map(|i| g[i] / (var[i] + eps).sqrt()).collect();
                    for row in x.chunks_exact_mut(c) {
                        for i in 0..c {
                            row[i] = (row[i] - mu[i]) * scale[i] + b[i];
                        }
                    }
                }
                LayerSpec::Relu { .. } => x.iter_mut().for_each(|v| *v = v.max(0.0)),
                LayerSpec::MaxPool { size, stride, .. } => {
                    let out_len = (t_len - size) / stride + 1;
                    let mut y = vec![f64::NEG_INFINITY; out_len * c];
                    for t in 0..out_len {
                        for j in 0..*size {
                            let src = &x[(t * stride + j) * c..(t * stride + j + 1) * c];
                            for (d, s) in y[t * c..(t + 1) * c].iter_mut().zip(src) {
                                *d = d.max(*s);
                            }
                        }
                    }
                    x = y;
                    t_len = out_len;
                }
                LayerSpec::Lstm {
                    input_size,
                    hidden_size,
                    weight_ih,
                    weight_hh,
                    bias_ih,
                    bias_hh,
                    ..
                } => {
                    let (ni, h) = (*input_size, *hidden_size);
                    let (wih, whh) = (self.tensor(weight_ih), self.tensor(weight_hh));
                    let bias: Vec<f64> = self
                        .tensor(bias_ih)
                        .iter()
                        .zip(self.tensor(bias_hh))
                        .map(|(a, b)| a + b)
                        .collect();
                    let mut hs = vec![0.0; h];
                    let mut cs = vec![0.0; h];
                    let mut gates = vec![0.0; 4 * h];
                    let mut y = vec![0.0; t_len * h];
                    for t in 0..t_len {
                        let xin = &x[t * ni..(t + 1) * ni];
                        for (r, g) in gates.iter_mut().enumerate() {
                            let a = &wih[r * ni..(r + 1) * ni];
                            let b = &whh[r * h..(r + 1) * h];
                            *g = bias[r]
                                + a.iter().zip(xin).map(|(p, q)| p * q).sum::<f64>()
                                + b.iter().zip(&hs).map(|(p, q)| p * q).sum::<f64>();
                        }
                        for u in 0..h {
                            let ig = sigmoid(gates[u]);
                            let fg = sigmoid(gates[h + u]);
                            let gg = gates[2 * h + u].tanh();
                            let og = sigmoid(gates[3 * h + u]);
                            cs[u] = fg * cs[u] + ig * gg;
                            hs[u] = og * cs[u].tanh();
                        }
                        y[t * h..(t + 1) * h].copy_from_slice(&hs);
                    }
                    x = y;
                    c = h;
                }
                LayerSpec::GlobalAvgPool { .. } => {
                    let mut y = vec![0.0; c];
                    for row in x.chunks_exact(c) {
                        for (d, s) in y.iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                    y.iter_mut().for_each(|v| *v /= t_len as f64);
                    x = y;
                    t_len = 1;
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                    weight,
                    bias,
                    ..
                } => {
                    let w = self.tensor(weight);
                    let b = self.tensor(bias);
                    x = (0..*out_features)
                        .map(|o| {
                            b[o] + w[o * in_features..(o + 1) * in_features]
                                .iter()
                                .zip(&x)
                                .map(|(p, q)| p * q)
                                .sum::<f64>()
                        })
                        .collect();
                    c = *out_features;
                }
            }
        }
        EmbeddingVector::new(x, EmbeddingSource::Encoder)
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn blob_path(manifest_path: &Path, blob: &str) -> PathBuf {
    manifest_path
        .parent()
        .map_or_else(|| PathBuf::from(blob), |d| d.join(blob))
}

pub fn encoder_infer(segment: &[Complex64], weights: &EncoderWeights) -> Result<EmbeddingVector> {
    weights.infer(segment)
}
