//! Proxy feature-extractor training: a small convolutional classifier that
//! predicts per-patch tissue-class histograms from normal-dose patches,
//! then sheds its head and freezes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::adam::{adam_step, AdamState};
use crate::autodiff::{LeafKind, Scalar, Tape, Tensor};
use crate::data::Corpus;
use crate::error::{LossError, TrainError};
use crate::nets::{feature_forward, init_params, BoundParams, FeatureExtractorSpec, NetworkParams};

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// HU bin edges defining the tissue classes (K edges -> K+1 classes).
    pub class_edges: Vec<f64>,
    pub seed: u64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            epochs: 3,
            batch_size: 64,
            alpha: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            class_edges: vec![-120.0, -20.0, 40.0, 120.0],
            seed: 0,
        }
    }
}

/// Per-patch class-fraction targets from the NDCT patch, computed in HU.
fn class_fractions<F: Scalar>(
    corpus: &Corpus,
    batch: &[usize],
    edges: &[f64],
) -> Tensor<F> {
    let window = corpus.window();
    let classes = edges.len() + 1;
    let per = corpus.patch_side() * corpus.patch_side();
    let mut data = vec![F::zero(); batch.len() * classes];
    for (bi, &idx) in batch.iter().enumerate() {
        let patch = corpus.patch_x(idx);
        for &v in patch {
            let hu = window.denormalize_value(v as f64);
            let mut class = edges.len();
            for (k, &edge) in edges.iter().enumerate() {
                if hu < edge {
                    class = k;
                    break;
                }
            }
            data[bi * classes + class] = data[bi * classes + class] + F::one();
        }
        for k in 0..classes {
            data[bi * classes + k] = data[bi * classes + k] / F::from_f64(per as f64);
        }
    }
    Tensor::new(vec![batch.len(), classes], data)
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Train the proxy on the corpus' training split and return the frozen
/// extractor parameters (head discarded) plus the final-epoch loss.
pub fn train_proxy_extractor<F: Scalar>(
    corpus: &Corpus,
    spec: &FeatureExtractorSpec,
    config: &ProxyConfig,
) -> Result<(NetworkParams<F>, f64), TrainError> {
    if corpus.train_indices().is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let classes = config.class_edges.len() + 1;
    let feat_ch = spec.feature_channels();

    // extractor plus classification head in one trainable collection
    let mut shapes = spec.param_shapes();
    shapes.push(("head.weight".to_string(), vec![feat_ch, classes]));
    shapes.push(("head.bias".to_string(), vec![classes]));
    let mut params: NetworkParams<F> =
        init_params("proxy.trainer", &shapes, mix_seed(config.seed, 0xFE));
    let mut state = AdamState::new(&params);

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut last_loss = f64::NAN;

    for _epoch in 0..config.epochs {
        let mut order: Vec<usize> = corpus.train_indices().collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            if batch.len() < config.batch_size.min(2) {
                continue;
            }
            let x = corpus.batch_x::<F>(batch);
            let targets = class_fractions::<F>(corpus, batch, &config.class_edges);

            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, LeafKind::Param);
            let xid = tape.constant(x);
            let features = feature_forward(&mut tape, &bound, spec, xid)?;

            // global average pool over the spatial axes
            let fs = tape.shape(features).to_vec();
            let (b, c, h, w) = (fs[0], fs[1], fs[2], fs[3]);
            let flat = tape.reshape(features, vec![b * c, h * w]).map_err(LossError::from)?;
            let pool_w = tape.constant(Tensor::full(vec![h * w, 1], F::from_f64(1.0 / (h * w) as f64)));
            let pooled = tape.matmul(flat, pool_w).map_err(LossError::from)?;
            let pooled = tape.reshape(pooled, vec![b, c]).map_err(LossError::from)?;

            let head_w = bound.id("head.weight")?;
            let head_b = bound.id("head.bias")?;
            let logits = tape.matmul(pooled, head_w).map_err(LossError::from)?;
            let pred = tape.bias_add(logits, head_b).map_err(LossError::from)?;

            let tid = tape.constant(targets);
            let diff = tape.sub(pred, tid).map_err(LossError::from)?;
            let sq = tape.square(diff).map_err(LossError::from)?;
            let loss = tape.mean_all(sq).map_err(LossError::from)?;
            epoch_loss += tape.value(loss).scalar_value().to_f64();
            n_batches += 1;

            let names: Vec<String> = params.entries().iter().map(|(n, _)| n.clone()).collect();
            let ids = bound.ids_for(&names)?;
            let mut map = tape.backward(loss, &ids)?;
            let grads: Vec<Tensor<F>> =
                ids.iter().map(|id| map.remove(id).expect("gradient")).collect();
            adam_step(&mut params, &grads, &mut state, config.alpha, config.beta1, config.beta2)?;
        }
        if n_batches > 0 {
            last_loss = epoch_loss / n_batches as f64;
        }
    }

    // shed the head, retag as the frozen extractor
    let entries: Vec<(String, Tensor<F>)> = params
        .entries()
        .iter()
        .filter(|(n, _)| !n.starts_with("head."))
        .cloned()
        .collect();
    Ok((NetworkParams::new(FeatureExtractorSpec::TAG, entries), last_loss))
}

/// Bind-as-constants helper for consumers that only ever freeze the proxy.
pub fn bind_frozen<F: Scalar>(params: &NetworkParams<F>, tape: &mut Tape<F>) -> BoundParams {
    params.bind(tape, LeafKind::Const)
}
