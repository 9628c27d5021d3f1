//! Per-epoch validation: pixel MSE, perceptual loss, and the Wasserstein
//! surrogate over the validation split, with no parameter updates.

use crate::autodiff::Scalar;
use crate::data::Corpus;
use crate::error::TrainError;
use crate::losses::wasserstein_estimate;
use crate::nets::{
    discriminator_eval, feature_eval, generator_eval, DiscriminatorSpec, FeatureExtractorSpec,
    GeneratorSpec, NetworkParams,
};

/// Validation-set statistics for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationStats {
    pub mse: f64,
    /// NaN when no extractor is attached.
    pub vgg: f64,
    /// NaN for critic-free variants.
    pub w_raw: f64,
    pub w_norm: f64,
}

/// Evaluate the generator (and critic, when present) over the full
/// validation split in fixed-size chunks.
pub fn validate<F: Scalar>(
    generator: &NetworkParams<F>,
    gspec: &GeneratorSpec,
    critic: Option<(&DiscriminatorSpec, &NetworkParams<F>)>,
    extractor: Option<(&FeatureExtractorSpec, &NetworkParams<F>)>,
    corpus: &Corpus,
    chunk: usize,
) -> Result<ValidationStats, TrainError> {
    let val: Vec<usize> = corpus.val_indices().collect();
    if val.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut sq_sum = 0.0f64;
    let mut px_count = 0usize;
    let mut feat_sq_sum = 0.0f64;
    let mut feat_count = 0usize;
    let mut scores_x: Vec<f64> = Vec::new();
    let mut scores_gz: Vec<f64> = Vec::new();

    for batch in val.chunks(chunk.max(1)) {
        let z = corpus.batch_z::<F>(batch);
        let x = corpus.batch_x::<F>(batch);
        let gz = generator_eval(generator, gspec, &z)?;

        for (&a, &b) in gz.data().iter().zip(x.data().iter()) {
            let d = a.to_f64() - b.to_f64();
            sq_sum += d * d;
        }
        px_count += gz.numel();

        if let Some((fspec, fparams)) = extractor {
            let fgz = feature_eval(fparams, fspec, &gz)?;
            let fx = feature_eval(fparams, fspec, &x)?;
            for (&a, &b) in fgz.data().iter().zip(fx.data().iter()) {
                let d = a.to_f64() - b.to_f64();
                feat_sq_sum += d * d;
            }
            feat_count += fgz.numel();
        }
        if let Some((dspec, dparams)) = critic {
            let sx = discriminator_eval(dparams, dspec, &x)?;
            let sgz = discriminator_eval(dparams, dspec, &gz)?;
            scores_x.extend(sx.data().iter().map(|&v| v.to_f64()));
            scores_gz.extend(sgz.data().iter().map(|&v| v.to_f64()));
        }
    }

    let mse = sq_sum / px_count as f64;
    let vgg = if feat_count > 0 { feat_sq_sum / feat_count as f64 } else { f64::NAN };
    let (w_raw, w_norm) = if scores_x.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let pixels = corpus.patch_side() * corpus.patch_side();
        let est = wasserstein_estimate(&scores_x, &scores_gz, pixels)?;
        (est.raw, est.normalized)
    };
    Ok(ValidationStats { mse, vgg, w_raw, w_norm })
}
