use num_complex::Complex64;
use pinpad_core::encoder::{
    encoder_infer, BlobWriter, EncoderManifest, EncoderWeights, InputSpec, LayerSpec, FORMAT_NAME,
    FORMAT_VERSION,
};
use pinpad_core::features::{EmbeddingSource, EMBEDDING_DIM};
use pinpad_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIG: f32 = 1000.0;

fn manifest(length: usize, layers: Vec<LayerSpec>) -> EncoderManifest {
    EncoderManifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        input: InputSpec {
            representation: "iq".into(),
            channels: 2,
            length,
        },
        conv_padding: "same".into(),
        lstm_initial_state: "zeros".into(),
        blob: "weights.bin".into(),
        layers,
        training: None,
    }
}

fn random(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n)
        .map(|_| scale * rng.random_range(-1.0f32..1.0))
        .collect()
}

/// Every layer passes its input through except the dense projection.
fn pass_through(length: usize, dense_w: &[f32], dense_b: &[f32]) -> (EncoderManifest, Vec<f32>) {
    let mut blob = BlobWriter::default();
    let k = 7;
    let mut conv = vec![0.0f32; 2 * 2 * k];
    for c in 0..2 {
        conv[(c * 2 + c) * k + k / 2] = 1.0;
    }
    let conv_w = blob.push(&[2, 2, k], &conv);
    let conv_b = blob.push(&[2], &[0.0, 0.0]);
    let bn = [
        blob.push(&[2], &[1.0, 1.0]),
        blob.push(&[2], &[0.0, 0.0]),
        blob.push(&[2], &[0.0, 0.0]),
        blob.push(&[2], &[1.0, 1.0]),
    ];
    // Gates i, f, g, o: input and output gates open, forget gate shut, cell input = x.
    let mut wih = vec![0.0f32; 8 * 2];
    wih[4 * 2] = 1.0;
    wih[5 * 2 + 1] = 1.0;
    let bih = [BIG, BIG, -BIG, -BIG, 0.0, 0.0, BIG, BIG];
    let lstm = [
        blob.push(&[8, 2], &wih),
        blob.push(&[8, 2], &[0.0; 16]),
        blob.push(&[8], &bih),
        blob.push(&[8], &[0.0; 8]),
    ];
    let dw = blob.push(&[EMBEDDING_DIM, 2], dense_w);
    let db = blob.push(&[EMBEDDING_DIM], dense_b);
    let [bw, bb, bm, bv] = bn;
    let [li, lh, lbi, lbh] = lstm;
    let layers = vec![
        LayerSpec::Conv1d {
            name: "conv".into(),
            in_channels: 2,
            out_channels: 2,
            kernel: k,
            weight: conv_w,
            bias: conv_b,
        },
        LayerSpec::BatchNorm {
            name: "bn".into(),
            channels: 2,
            eps: 1e-30,
            weight: bw,
            bias: bb,
            running_mean: bm,
            running_var: bv,
        },
        LayerSpec::MaxPool {
            name: "pool".into(),
            size: 1,
            stride: 1,
        },
        LayerSpec::Lstm {
            name: "lstm".into(),
            input_size: 2,
            hidden_size: 2,
            weight_ih: li,
            weight_hh: lh,
            bias_ih: lbi,
            bias_hh: lbh,
        },
        LayerSpec::GlobalAvgPool { name: "gap".into() },
        LayerSpec::Dense {
            name: "dense".into(),
            in_features: 2,
            out_features: EMBEDDING_DIM,
            weight: dw,
            bias: db,
        },
    ];
    (manifest(length, layers), blob.data)
}

#[test]
fn pass_through_network_projects_the_time_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dense_w = random(&mut rng, EMBEDDING_DIM * 2, 1.0);
    let dense_b = random(&mut rng, EMBEDDING_DIM, 1.0);
    let (m, blob) = pass_through(64, &dense_w, &dense_b);
    let w = EncoderWeights::from_parts(m, &blob).unwrap();
    // Small amplitudes keep tanh(tanh(x)) within 1e-12 of x.
    let x: Vec<Complex64> = (0..64)
        .map(|_| Complex64::new(rng.random_range(-1e-4..1e-4), rng.random_range(-1e-4..1e-4)))
        .collect();
    let mean = x.iter().sum::<Complex64>() / 64.0;
    let z = encoder_infer(&x, &w).unwrap();
    assert_eq!(z.source, EmbeddingSource::Encoder);
    assert_eq!(z.values.len(), EMBEDDING_DIM);
    for (o, v) in z.values.iter().enumerate() {
        let want = dense_b[o] as f64
            + dense_w[2 * o] as f64 * mean.re
            + dense_w[2 * o + 1] as f64 * mean.im;
        assert!((v - want).abs() < 1e-10, "output {o}: {v} vs {want}");
    }
}

/// The published architecture with random weights.
fn full_network(length: usize, seed: u64) -> (EncoderManifest, Vec<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blob = BlobWriter::default();
    let mut layers = Vec::new();
    let mut ch = 2;
    for (i, out) in [32usize, 64].into_iter().enumerate() {
        let w = random(&mut rng, out * ch * 7, 0.3);
        let b = random(&mut rng, out, 0.1);
        layers.push(LayerSpec::Conv1d {
            name: format!("conv{i}"),
            in_channels: ch,
            out_channels: out,
            kernel: 7,
            weight: blob.push(&[out, ch, 7], &w),
            bias: blob.push(&[out], &b),
        });
        let var: Vec<f32> = (0..out).map(|_| rng.random_range(0.5f32..2.0)).collect();
        layers.push(LayerSpec::BatchNorm {
            name: format!("bn{i}"),
            channels: out,
            eps: 1e-5,
            weight: blob.push(&[out], &random(&mut rng, out, 1.0)),
            bias: blob.push(&[out], &random(&mut rng, out, 0.1)),
            running_mean: blob.push(&[out], &random(&mut rng, out, 0.1)),
            running_var: blob.push(&[out], &var),
        });
        layers.push(LayerSpec::Relu {
            name: format!("relu{i}"),
        });
        layers.push(LayerSpec::MaxPool {
            name: format!("pool{i}"),
            size: 2,
            stride: 2,
        });
        ch = out;
    }
    let h = 64;
    layers.push(LayerSpec::Lstm {
        name: "lstm".into(),
        input_size: ch,
        hidden_size: h,
        weight_ih: blob.push(&[4 * h, ch], &random(&mut rng, 4 * h * ch, 0.1)),
        weight_hh: blob.push(&[4 * h, h], &random(&mut rng, 4 * h * h, 0.1)),
        bias_ih: blob.push(&[4 * h], &random(&mut rng, 4 * h, 0.1)),
        bias_hh: blob.push(&[4 * h], &random(&mut rng, 4 * h, 0.1)),
    });
    layers.push(LayerSpec::GlobalAvgPool { name: "gap".into() });
    layers.push(LayerSpec::Dense {
        name: "proj".into(),
        in_features: h,
        out_features: EMBEDDING_DIM,
        weight: blob.push(
            &[EMBEDDING_DIM, h],
            &random(&mut rng, EMBEDDING_DIM * h, 0.2),
        ),
        bias: blob.push(&[EMBEDDING_DIM], &random(&mut rng, EMBEDDING_DIM, 0.1)),
    });
    (manifest(length, layers), blob.data)
}

fn segment(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

#[test]
fn full_network_is_deterministic_and_survives_a_disk_round_trip() {
    let (m, blob) = full_network(256, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("encoder.json");
    EncoderWeights::save(&m, &blob, &path).unwrap();
    let loaded = EncoderWeights::load(&path).unwrap();
    let direct = EncoderWeights::from_parts(m, &blob).unwrap();
    let x = segment(256, 2);
    let a = loaded.infer(&x).unwrap();
    assert_eq!(a, loaded.infer(&x).unwrap());
    assert_eq!(a, direct.infer(&x).unwrap());
    assert_eq!(a.values.len(), EMBEDDING_DIM);
    assert!(a.values.iter().all(|v| v.is_finite()));
    assert_ne!(a, loaded.infer(&segment(256, 3)).unwrap());
}

#[test]
fn wrong_segment_length_is_an_error() {
    let (m, blob) = full_network(128, 1);
    let w = EncoderWeights::from_parts(m, &blob).unwrap();
    assert!(matches!(
        w.infer(&segment(127, 0)),
        Err(Error::SegmentLength {
            expected: 128,
            actual: 127
        })
    ));
}

#[test]
fn shape_errors_name_the_layer() {
    let (mut m, blob) = full_network(128, 1);
    if let LayerSpec::Conv1d { in_channels, .. } = &mut m.layers[4] {
        *in_channels = 16;
    }
    match EncoderWeights::from_parts(m, &blob) {
        Err(Error::Shape { layer, name, .. }) => assert_eq!((layer, name.as_str()), (4, "conv1")),
        other => panic!("{other:?}"),
    }

    let (mut m, blob) = full_network(128, 1);
    let gap = m.layers.len() - 2;
    m.layers.remove(gap);
    match EncoderWeights::from_parts(m, &blob) {
        Err(Error::Shape { name, .. }) => assert_eq!(name, "proj"),
        other => panic!("{other:?}"),
    }

    let (m, blob) = full_network(128, 1);
    let err = EncoderWeights::from_parts(m, &blob[..blob.len() - 1]).unwrap_err();
    assert!(err.to_string().contains("proj"), "{err}");

    let (mut m, blob) = full_network(128, 1);
    m.version = FORMAT_VERSION + 1;
    assert!(EncoderWeights::from_parts(m, &blob).is_err());
}
