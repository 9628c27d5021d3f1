//! Whole-image denoising with a trained generator: the network is fully
//! convolutional, so arbitrary image sizes work regardless of the training
//! patch size.

use crate::autodiff::{Scalar, Tensor};
use crate::data::Window;
use crate::error::NetError;
use crate::nets::{generator_eval, GeneratorSpec, NetworkParams};

/// Normalize an HU image into the training window, run the generator, and
/// map back to HU. Deterministic for fixed weights and input.
pub fn denoise_image<F: Scalar>(
    generator: &NetworkParams<F>,
    spec: &GeneratorSpec,
    window: &Window,
    image_hu: &Tensor<f64>,
) -> Result<Tensor<f64>, NetError> {
    assert_eq!(image_hu.shape().len(), 2, "denoise_image expects a 2-d image");
    let (h, w) = (image_hu.shape()[0], image_hu.shape()[1]);
    let normalized = window.normalize(image_hu);
    let input: Tensor<F> = Tensor::new(
        vec![1, 1, h, w],
        normalized.data().iter().map(|&v| F::from_f64(v)).collect(),
    );
    let out = generator_eval(generator, spec, &input)?;
    let back = Tensor::new(vec![h, w], out.data().iter().map(|&v| v.to_f64()).collect());
    Ok(window.denormalize(&back))
}
