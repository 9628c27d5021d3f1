use super::*;
use crate::autodiff::Tensor;
use crate::data::{Corpus, PatchOrigin, Window};
use crate::losses::{LossKind, LossWeights};
use crate::nets::{FeatureExtractorSpec, GeneratorSpec, NetworkParams};

fn splitmix(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    z as f64 / u64::MAX as f64
}

/// Small synthetic corpus: smooth targets, noisy inputs.
fn synthetic_corpus(n_train: usize, n_val: usize, side: usize, seed: u64) -> Corpus {
    let n = n_train + n_val;
    let per = side * side;
    let mut state = seed;
    let mut z_all = Vec::with_capacity(n * per);
    let mut x_all = Vec::with_capacity(n * per);
    let mut origins = Vec::with_capacity(n);
    for k in 0..n {
        let fx = 0.5 + splitmix(&mut state);
        let fy = 0.5 + splitmix(&mut state);
        let phase = splitmix(&mut state) * 6.28;
        for i in 0..side {
            for j in 0..side {
                let t =
                    ((i as f64 * fy + j as f64 * fx) * 0.35 + phase).sin() * 0.25 + 0.5;
                let noise = (splitmix(&mut state) - 0.5) * 0.15;
                x_all.push(t as f32);
                z_all.push((t + noise).clamp(0.0, 1.0) as f32);
            }
        }
        origins.push(PatchOrigin { source_id: k as u32, row: 0, col: 0 });
    }
    Corpus::new(side, z_all, x_all, origins, Window::default(), seed, n_train, 0)
}

#[test]
fn adam_first_step_matches_closed_form() {
    // g = 1 everywhere: m-hat = 1, v-hat = 1, delta = -alpha / (1 + eps)
    let mut params = NetworkParams::new(
        "t",
        vec![("w".to_string(), Tensor::<f64>::full(vec![3], 0.5))],
    );
    let mut state = AdamState::new(&params);
    let grads = vec![Tensor::<f64>::full(vec![3], 1.0)];
    adam_step(&mut params, &grads, &mut state, 1e-5, 0.5, 0.9).unwrap();
    let expected_delta = -1e-5 / (1.0 + 1e-8);
    for &v in params.get("w").unwrap().data() {
        assert!(
            (v - (0.5 + expected_delta)).abs() < 1e-12,
            "got {v}, expected {}",
            0.5 + expected_delta
        );
    }
    assert_eq!(state.step_count(), 1);
}

#[test]
fn adam_zero_gradient_leaves_params_but_increments_step() {
    let mut params =
        NetworkParams::new("t", vec![("w".to_string(), Tensor::<f64>::full(vec![4], 1.25))]);
    let mut state = AdamState::new(&params);
    let grads = vec![Tensor::<f64>::zeros(vec![4])];
    adam_step(&mut params, &grads, &mut state, 1e-3, 0.5, 0.9).unwrap();
    assert!(params.get("w").unwrap().data().iter().all(|&v| v == 1.25));
    assert_eq!(state.step_count(), 1);
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut params = NetworkParams::new(
            "t",
            vec![("w".to_string(), Tensor::<f32>::full(vec![8], 0.1))],
        );
        let mut state = AdamState::new(&params);
        for step in 1..=5 {
            let g: Vec<f32> = (0..8).map(|i| ((i + step) as f32 * 0.37).sin()).collect();
            adam_step(&mut params, &[Tensor::new(vec![8], g)], &mut state, 1e-3, 0.5, 0.9).unwrap();
        }
        params.digest()
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_rejects_non_finite_gradient_without_mutation() {
    let mut params =
        NetworkParams::new("t", vec![("conv.w".to_string(), Tensor::<f64>::full(vec![2], 3.0))]);
    let before = params.digest();
    let mut state = AdamState::new(&params);
    let grads = vec![Tensor::new(vec![2], vec![1.0, f64::NAN])];
    let err = adam_step(&mut params, &grads, &mut state, 1e-3, 0.5, 0.9).unwrap_err();
    assert!(err.to_string().contains("conv.w"), "{err}");
    assert_eq!(params.digest(), before);
    assert_eq!(state.step_count(), 0);
}

fn tiny_extractor_for(corpus: &Corpus, seed: u64) -> (FeatureExtractorSpec, NetworkParams<f32>) {
    let spec = FeatureExtractorSpec {
        conv_filters: vec![4, 8],
        strides: vec![1, 2],
        kernel: 3,
        tap_layer: 1,
        input_channels: 3,
    };
    let (params, _) = train_proxy_extractor::<f32>(
        corpus,
        &spec,
        &ProxyConfig { epochs: 1, batch_size: 8, seed, ..Default::default() },
    )
    .unwrap();
    (spec, params)
}

fn tiny_config(kind: LossKind, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        loss_kind: kind,
        weights: LossWeights::default(),
        alpha: 1e-4,
        beta1: 0.5,
        beta2: 0.9,
        n_epochs: epochs,
        n_critic: 4,
        batch_size: 4,
        patch_side: 16,
        seed,
        checkpoint_every: 10,
    }
}

#[test]
fn training_is_deterministic_for_adversarial_kind() {
    let corpus = synthetic_corpus(20, 8, 16, 5);
    let (fspec, fparams) = tiny_extractor_for(&corpus, 5);
    let run = || {
        let outcome = train::<f32>(
            &corpus,
            &tiny_config(LossKind::WganVgg, 2, 9),
            Some((&fspec, &fparams)),
            None,
        )
        .unwrap();
        (
            outcome.generator.digest(),
            outcome.critic.as_ref().unwrap().digest(),
            outcome.history.to_csv_deterministic(),
        )
    };
    let (g1, d1, h1) = run();
    let (g2, d2, h2) = run();
    assert_eq!(g1, g2);
    assert_eq!(d1, d2);
    assert_eq!(h1, h2);
}

#[test]
fn exactly_n_critic_updates_per_generator_update() {
    // 20 train pairs, batch 4 -> 5 batches/epoch -> exactly one group of 4+1
    let corpus = synthetic_corpus(20, 8, 16, 6);
    let outcome =
        train::<f32>(&corpus, &tiny_config(LossKind::Wgan, 3, 1), None, None).unwrap();
    let c = outcome.history.counters;
    assert_eq!(c.generator_updates, 3);
    assert_eq!(c.critic_updates, 12);
    assert_eq!(c.critic_updates, 4 * c.generator_updates);
}

#[test]
fn cnn_mse_smoke_records_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic_corpus(24, 8, 16, 7);
    let mut config = tiny_config(LossKind::CnnMse, 3, 2);
    config.checkpoint_every = 2;
    let outcome = train::<f32>(&corpus, &config, None, Some(dir.path())).unwrap();
    assert_eq!(outcome.history.records.len(), 3);
    for r in &outcome.history.records {
        assert!(r.mse.is_finite());
        assert!(r.vgg.is_nan());
        assert!(r.w_raw.is_nan());
    }
    assert!(outcome.critic.is_none());
    assert!(dir.path().join("history.csv").exists());
    assert!(dir.path().join("cnn-mse_epoch2.wvgf").exists());
    assert!(dir.path().join("cnn-mse_epoch3.wvgf").exists());

    // the checkpoint yields a loadable generator
    let g: NetworkParams<f32> =
        load_params_from_file(&dir.path().join("cnn-mse_epoch3.wvgf"), GeneratorSpec::TAG).unwrap();
    assert_eq!(g.digest(), outcome.generator.digest());

    // CSV round-trips
    let parsed = History::parse_csv(&outcome.history.to_csv()).unwrap();
    assert_eq!(parsed.records.len(), 3);
}

#[test]
fn gan_kind_trains_with_sigmoid_head() {
    let corpus = synthetic_corpus(20, 8, 16, 8);
    let outcome = train::<f32>(&corpus, &tiny_config(LossKind::Gan, 1, 3), None, None).unwrap();
    assert_eq!(outcome.history.records.len(), 1);
    assert!(outcome.history.records[0].w_raw.is_finite());
    assert!(outcome.critic.is_some());
}

#[test]
fn divergence_guard_aborts_and_reports_epoch() {
    let corpus = synthetic_corpus(16, 4, 16, 9);
    let mut config = tiny_config(LossKind::CnnMse, 4, 4);
    config.alpha = 1e18; // absurd learning rate: parameters explode
    let outcome = train::<f32>(&corpus, &config, None, None).unwrap();
    assert!(outcome.diverged_at.is_some());
    assert!(outcome.history.records.len() < 4);
}

#[test]
fn vgg_kind_requires_extractor() {
    let corpus = synthetic_corpus(8, 4, 16, 10);
    let err = train::<f32>(&corpus, &tiny_config(LossKind::WganVgg, 1, 5), None, None).unwrap_err();
    assert!(matches!(err, crate::error::TrainError::MissingExtractor(_)));
}

#[test]
fn validate_reports_nan_for_absent_components() {
    let corpus = synthetic_corpus(8, 4, 16, 11);
    let gspec = GeneratorSpec::default();
    let g: NetworkParams<f32> =
        crate::nets::init_params(GeneratorSpec::TAG, &gspec.param_shapes(), 3);
    let stats = validate(&g, &gspec, None, None, &corpus, 4).unwrap();
    assert!(stats.mse.is_finite());
    assert!(stats.vgg.is_nan());
    assert!(stats.w_raw.is_nan());
}

#[test]
fn proxy_training_is_deterministic_and_frozen_tag() {
    let corpus = synthetic_corpus(16, 4, 16, 12);
    let spec = FeatureExtractorSpec {
        conv_filters: vec![4, 8],
        strides: vec![1, 2],
        kernel: 3,
        tap_layer: 1,
        input_channels: 3,
    };
    let config = ProxyConfig { epochs: 2, batch_size: 8, seed: 77, ..Default::default() };
    let (a, loss_a) = train_proxy_extractor::<f32>(&corpus, &spec, &config).unwrap();
    let (b, loss_b) = train_proxy_extractor::<f32>(&corpus, &spec, &config).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(loss_a, loss_b);
    assert!(loss_a.is_finite());
    assert_eq!(a.tag(), FeatureExtractorSpec::TAG);
    assert!(a.get("head.weight").is_none());
    a.validate_shapes(&spec.param_shapes()).unwrap();
}

#[test]
fn history_moving_average() {
    let mut h = History::default();
    for (i, w) in [5.0, 4.0, 3.0, 2.0, 1.0].iter().enumerate() {
        h.records.push(EpochRecord {
            epoch: i + 1,
            mse: 0.0,
            vgg: 0.0,
            w_raw: *w,
            w_norm: *w,
            seconds: 0.0,
        });
    }
    assert!((h.w_moving_average(3, 3) - 4.0).abs() < 1e-12);
    assert!((h.w_moving_average(5, 3) - 2.0).abs() < 1e-12);
    assert!(h.w_moving_average(2, 3).is_nan());
}
