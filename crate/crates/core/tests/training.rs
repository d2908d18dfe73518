use partseg_core::condnet::{
    decode_params, encode_params, evaluate, predict, train_from, train_toy, Conditioning,
    EmbeddingConfig, Sample, ToyNetConfig, ToyParams, TrainConfig,
};
use partseg_core::synth::generate_many;
use partseg_core::{AdjacencyConfig, DilationMode, PartsToObjectsMapping, SceneSpec, Weighting};

fn data() -> (Vec<Sample>, PartsToObjectsMapping) {
    let spec = SceneSpec {
        width: 16,
        height: 16,
        num_objects: 2,
        parts_per_object: vec![2, 2],
        min_instance: 2,
        seed: 3,
        ..SceneSpec::default()
    };
    let samples = generate_many(&spec, 4)
        .unwrap()
        .iter()
        .map(|s| s.to_sample().unwrap())
        .collect();
    (samples, spec.mapping().unwrap())
}

fn net(conditioning: Conditioning) -> ToyNetConfig {
    ToyNetConfig {
        num_parts: 5,
        num_objects: 3,
        encoder_channels: vec![4, 6],
        decoder_channels: vec![6, 4],
        embedding: EmbeddingConfig {
            kernel_sizes: vec![3, 3],
            strides: vec![2, 2],
            channel_sizes: vec![3, 4],
        },
        conditioning,
        ..ToyNetConfig::default()
    }
}

fn cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let (data, mapping) = data();
    let net = net(Conditioning::Multi);
    let out = train_toy(&data, &mapping, &net, &TrainConfig { lr: 0.0, ..cfg(4) }).unwrap();
    assert_eq!(out.params, ToyParams::init(&net).unwrap());
    assert!(out.trace.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn runs_are_reproducible() {
    let (data, mapping) = data();
    for batch_size in [None, Some(3)] {
        let c = TrainConfig {
            batch_size,
            ..cfg(6)
        };
        let a = train_toy(&data, &mapping, &net(Conditioning::Multi), &c).unwrap();
        let b = train_toy(&data, &mapping, &net(Conditioning::Multi), &c).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.params, b.params);
    }
}

#[test]
fn loss_goes_down() {
    let (data, mapping) = data();
    let out = train_toy(&data, &mapping, &net(Conditioning::Multi), &cfg(30)).unwrap();
    assert!(out.trace.last().unwrap().total < out.trace[0].total);
}

#[test]
fn trace_matches_evaluation_at_start() {
    let (data, mapping) = data();
    let net = net(Conditioning::Single);
    let c = cfg(1);
    let out = train_toy(&data, &mapping, &net, &c).unwrap();
    let init = ToyParams::init(&net).unwrap();
    let ev = evaluate(&data, &mapping, &net, &init, &c.adjacency, &c.weights).unwrap();
    assert!((ev.total - out.trace[0].total).abs() < 1e-12);
}

#[test]
fn ablations_differ() {
    let (data, mapping) = data();
    let mut traces = Vec::new();
    for mode in [Conditioning::Multi, Conditioning::Single, Conditioning::Off] {
        for weighting in [Weighting::Weighted, Weighting::Unweighted] {
            let c = TrainConfig {
                adjacency: AdjacencyConfig {
                    weighting,
                    dilation: DilationMode::smooth(),
                    ..AdjacencyConfig::default()
                },
                ..cfg(3)
            };
            traces.push(train_toy(&data, &mapping, &net(mode), &c).unwrap().trace);
        }
    }
    for i in 0..traces.len() {
        for j in i + 1..traces.len() {
            assert_ne!(traces[i], traces[j], "{i} vs {j}");
        }
    }
}

#[test]
fn resumed_training_from_saved_params() {
    let (data, mapping) = data();
    let net = net(Conditioning::Multi);
    let full = train_toy(
        &data,
        &mapping,
        &net,
        &TrainConfig {
            lr: 0.3,
            poly_power: 0.0,
            ..cfg(4)
        },
    )
    .unwrap();
    let half = train_toy(
        &data,
        &mapping,
        &net,
        &TrainConfig {
            lr: 0.3,
            poly_power: 0.0,
            ..cfg(2)
        },
    )
    .unwrap();
    let restored = decode_params(&encode_params(&half.params), &net).unwrap();
    let rest = train_from(
        restored,
        &data,
        &mapping,
        &net,
        &TrainConfig {
            lr: 0.3,
            poly_power: 0.0,
            ..cfg(2)
        },
    );
    let rest = rest.unwrap();
    // Parameters pass through f32 on disk, so the continuation is close but not bit-equal.
    for (a, b) in full.trace[2..].iter().zip(&rest.trace) {
        assert!((a.total - b.total).abs() < 1e-4);
    }
    let preds = predict(&data, &net, &rest.params).unwrap();
    assert_eq!(preds.len(), data.len());
}
