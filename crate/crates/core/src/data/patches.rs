//! Random patch extraction with air rejection and image-level splitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::corpus::Corpus;
use super::normalize::Window;
use crate::autodiff::Tensor;
use crate::error::DataError;

/// Where a stored patch was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchOrigin {
    pub source_id: u32,
    pub row: u32,
    pub col: u32,
}

#[derive(Debug, Clone)]
pub struct ExtractConfig {
    pub patch_side: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Reject a patch when the fraction of pixels below `air_hu_cutoff`
    /// exceeds this.
    pub air_threshold: f64,
    pub air_hu_cutoff: f64,
    pub window: Window,
    pub seed: u64,
    /// Fraction of source images reserved for the validation pool.
    pub val_image_fraction: f64,
    /// Give up after this many rejections per requested patch.
    pub max_attempts_factor: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            patch_side: 64,
            n_train: 10_000,
            n_val: 1_000,
            air_threshold: 0.75,
            air_hu_cutoff: -300.0,
            window: Window::default(),
            seed: 0,
            val_image_fraction: 0.2,
            max_attempts_factor: 50,
        }
    }
}

/// Fraction of patch pixels below the air cutoff, measured on the
/// normal-dose image in HU.
fn air_fraction(ndct: &Tensor<f64>, row: usize, col: usize, side: usize, cutoff: f64) -> f64 {
    let n = ndct.shape()[1];
    let mut below = 0usize;
    for i in row..row + side {
        for j in col..col + side {
            if ndct.data()[i * n + j] < cutoff {
                below += 1;
            }
        }
    }
    below as f64 / (side * side) as f64
}

#[cfg(test)]
pub(crate) fn air_fraction_for_test(
    ndct: &Tensor<f64>,
    row: usize,
    col: usize,
    side: usize,
    cutoff: f64,
) -> f64 {
    air_fraction(ndct, row, col, side, cutoff)
}

fn cut_normalized(img: &Tensor<f64>, row: usize, col: usize, side: usize, window: &Window) -> Vec<f32> {
    let n = img.shape()[1];
    let mut out = Vec::with_capacity(side * side);
    for i in row..row + side {
        for j in col..col + side {
            out.push(window.normalize_value(img.data()[i * n + j]) as f32);
        }
    }
    out
}

/// Sample aligned (LDCT, NDCT) patches from image pairs.
///
/// Source images are split into disjoint train/validation pools first, so no
/// patch location can appear in both splits from the same image. Sampling is
/// uniform over (pool image, row, col); a patch is rejected when it is
/// mostly air. Deterministic given (inputs, seed).
pub fn extract_patches(
    pairs: &[(Tensor<f64>, Tensor<f64>)], // (ndct, ldct) in HU
    config: &ExtractConfig,
) -> Result<Corpus, DataError> {
    config.window.validate()?;
    if !(0.0..=1.0).contains(&config.air_threshold) {
        return Err(DataError::BadThreshold(config.air_threshold));
    }
    let side = config.patch_side;
    for (ndct, _) in pairs {
        let img_side = ndct.shape()[0];
        if side > img_side {
            return Err(DataError::PatchTooLarge { patch: side, image: img_side });
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    // image-level split: shuffle indices, take the tail as validation pool
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_val_imgs = ((pairs.len() as f64 * config.val_image_fraction).round() as usize)
        .clamp(1, pairs.len().saturating_sub(1).max(1));
    let (train_pool, val_pool) = if pairs.len() == 1 {
        // degenerate single-image corpus: share the image, split by fiat
        (order.clone(), order.clone())
    } else {
        let split_at = pairs.len() - n_val_imgs;
        (order[..split_at].to_vec(), order[split_at..].to_vec())
    };

    let mut z_all: Vec<f32> = Vec::with_capacity((config.n_train + config.n_val) * side * side);
    let mut x_all: Vec<f32> = Vec::with_capacity(z_all.capacity());
    let mut origins: Vec<PatchOrigin> = Vec::with_capacity(config.n_train + config.n_val);
    let mut warnings = 0u32;

    let mut split = 0usize;
    for (stage, (pool, want)) in [(&train_pool, config.n_train), (&val_pool, config.n_val)]
        .into_iter()
        .enumerate()
    {
        let mut accepted = 0usize;
        let mut attempts = 0usize;
        let budget = want.saturating_mul(config.max_attempts_factor).max(1);
        while accepted < want && attempts < budget {
            attempts += 1;
            let img_idx = pool[rng.gen_range(0..pool.len())];
            let (ndct, ldct) = &pairs[img_idx];
            let img_side = ndct.shape()[0];
            let row = rng.gen_range(0..=img_side - side);
            let col = rng.gen_range(0..=img_side - side);
            if air_fraction(ndct, row, col, side, config.air_hu_cutoff) > config.air_threshold {
                continue;
            }
            z_all.extend(cut_normalized(ldct, row, col, side, &config.window));
            x_all.extend(cut_normalized(ndct, row, col, side, &config.window));
            origins.push(PatchOrigin { source_id: img_idx as u32, row: row as u32, col: col as u32 });
            accepted += 1;
        }
        warnings += (want - accepted) as u32;
        if stage == 0 {
            split = origins.len();
        }
    }

    Ok(Corpus::new(side, z_all, x_all, origins, config.window, config.seed, split, warnings))
}
