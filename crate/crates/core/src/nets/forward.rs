//! Forward passes, both as tape builders (differentiable) and as plain
//! evaluators (no recording; used for validation, denoising, and the
//! detached generator samples in critic updates).

use super::specs::{DiscriminatorSpec, FeatureExtractorSpec, GeneratorSpec};
use super::{BoundParams, NetworkParams};
use crate::autodiff::{eval_op, kernels, NodeId, Op, Scalar, Tape, Tensor};
use crate::error::NetError;

fn check_patch_input<F: Scalar>(shape: &[usize], min_side: usize) -> Result<(usize, usize), NetError> {
    if shape.len() != 4 || shape[1] != 1 {
        return Err(NetError::BadInput {
            h: shape.get(2).copied().unwrap_or(0),
            w: shape.get(3).copied().unwrap_or(0),
            why: format!("expected [batch, 1, h, w], got {shape:?}"),
        });
    }
    let (h, w) = (shape[2], shape[3]);
    if h < min_side || w < min_side {
        return Err(NetError::BadInput { h, w, why: format!("side must be >= {min_side}") });
    }
    let _ = F::PRECISION;
    Ok((h, w))
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// G(z): shape-preserving denoiser. Differentiable w.r.t. params and input.
pub fn generator_forward<F: Scalar>(
    tape: &mut Tape<F>,
    params: &BoundParams,
    spec: &GeneratorSpec,
    z: NodeId,
) -> Result<NodeId, NetError> {
    check_patch_input::<F>(tape.shape(z), GeneratorSpec::MIN_SIDE)?;
    let mut x = z;
    for i in 0..spec.n_layers {
        let w = params.id(&format!("conv{i}.weight"))?;
        let b = params.id(&format!("conv{i}.bias"))?;
        x = tape.conv2d(x, w, 1, spec.pad())?;
        x = tape.bias_add(x, b)?;
        if i + 1 < spec.n_layers {
            x = tape.relu(x)?;
        }
    }
    Ok(x)
}

/// Untaped G(z) for inference paths; bit-identical to the tape builder.
pub fn generator_eval<F: Scalar>(
    params: &NetworkParams<F>,
    spec: &GeneratorSpec,
    z: &Tensor<F>,
) -> Result<Tensor<F>, NetError> {
    check_patch_input::<F>(z.shape(), GeneratorSpec::MIN_SIDE)?;
    let mut x = z.clone();
    for i in 0..spec.n_layers {
        let w = named(params, &format!("conv{i}.weight"))?;
        let b = named(params, &format!("conv{i}.bias"))?;
        x = eval_op(&Op::Conv2d { stride: 1, pad: spec.pad() }, &[&x, w]);
        x = eval_op(&Op::BiasAdd, &[&x, b]);
        if i + 1 < spec.n_layers {
            x = eval_op(&Op::Relu, &[&x]);
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Discriminator / critic
// ---------------------------------------------------------------------------

/// D(x): one unbounded scalar per batch sample, shape [B].
pub fn discriminator_forward<F: Scalar>(
    tape: &mut Tape<F>,
    params: &BoundParams,
    spec: &DiscriminatorSpec,
    x: NodeId,
) -> Result<NodeId, NetError> {
    let (h, w) = check_patch_input::<F>(tape.shape(x), 8)?;
    if h != spec.patch_side || w != spec.patch_side {
        return Err(NetError::BadInput {
            h,
            w,
            why: format!(
                "critic head is sized for {0}x{0} patches (flattened {1})",
                spec.patch_side,
                spec.flat_size()
            ),
        });
    }
    let slope = F::from_f64(spec.leaky_slope);
    let mut t = x;
    for (i, &stride) in spec.strides.iter().enumerate() {
        let w = params.id(&format!("conv{i}.weight"))?;
        let b = params.id(&format!("conv{i}.bias"))?;
        t = tape.conv2d(t, w, stride, spec.pad())?;
        t = tape.bias_add(t, b)?;
        t = tape.leaky_relu(slope, t)?;
    }
    t = tape.flatten(t)?;
    let w0 = params.id("fc0.weight")?;
    let b0 = params.id("fc0.bias")?;
    t = tape.matmul(t, w0)?;
    t = tape.bias_add(t, b0)?;
    t = tape.leaky_relu(slope, t)?;
    let w1 = params.id("fc1.weight")?;
    let b1 = params.id("fc1.bias")?;
    t = tape.matmul(t, w1)?;
    t = tape.bias_add(t, b1)?;
    let batch = tape.shape(t)[0];
    Ok(tape.reshape(t, vec![batch])?)
}

/// Untaped critic scores, shape [B].
pub fn discriminator_eval<F: Scalar>(
    params: &NetworkParams<F>,
    spec: &DiscriminatorSpec,
    x: &Tensor<F>,
) -> Result<Tensor<F>, NetError> {
    let (h, w) = check_patch_input::<F>(x.shape(), 8)?;
    if h != spec.patch_side || w != spec.patch_side {
        return Err(NetError::BadInput {
            h,
            w,
            why: format!("critic head is sized for {0}x{0} patches", spec.patch_side),
        });
    }
    let slope = F::from_f64(spec.leaky_slope);
    let mut t = x.clone();
    for (i, &stride) in spec.strides.iter().enumerate() {
        let wt = named(params, &format!("conv{i}.weight"))?;
        let b = named(params, &format!("conv{i}.bias"))?;
        t = eval_op(&Op::Conv2d { stride, pad: spec.pad() }, &[&t, wt]);
        t = eval_op(&Op::BiasAdd, &[&t, b]);
        t = eval_op(&Op::LeakyRelu(slope), &[&t]);
    }
    let batch = t.shape()[0];
    let flat: usize = t.shape().iter().skip(1).product();
    t = t.reshaped(vec![batch, flat]);
    t = eval_op(&Op::MatMul { ta: false, tb: false }, &[&t, named(params, "fc0.weight")?]);
    t = eval_op(&Op::BiasAdd, &[&t, named(params, "fc0.bias")?]);
    t = eval_op(&Op::LeakyRelu(slope), &[&t]);
    t = eval_op(&Op::MatMul { ta: false, tb: false }, &[&t, named(params, "fc1.weight")?]);
    t = eval_op(&Op::BiasAdd, &[&t, named(params, "fc1.bias")?]);
    Ok(t.reshaped(vec![batch]))
}

// ---------------------------------------------------------------------------
// Feature extractor
// ---------------------------------------------------------------------------

/// phi(x): activations of the tap layer, shape [B, d, h', w']. The grayscale
/// input is duplicated to `input_channels` first.
pub fn feature_forward<F: Scalar>(
    tape: &mut Tape<F>,
    params: &BoundParams,
    spec: &FeatureExtractorSpec,
    image: NodeId,
) -> Result<NodeId, NetError> {
    check_patch_input::<F>(tape.shape(image), 4)?;
    if spec.tap_layer >= spec.n_layers() {
        return Err(NetError::BadInput {
            h: 0,
            w: 0,
            why: format!("tap layer {} out of range ({} layers)", spec.tap_layer, spec.n_layers()),
        });
    }
    let mut t = tape.repeat_channels(image, spec.input_channels)?;
    for i in 0..=spec.tap_layer {
        let w = params.id(&format!("conv{i}.weight"))?;
        let b = params.id(&format!("conv{i}.bias"))?;
        t = tape.conv2d(t, w, spec.strides[i], spec.pad())?;
        t = tape.bias_add(t, b)?;
        t = tape.relu(t)?;
    }
    Ok(t)
}

/// Untaped feature map.
pub fn feature_eval<F: Scalar>(
    params: &NetworkParams<F>,
    spec: &FeatureExtractorSpec,
    image: &Tensor<F>,
) -> Result<Tensor<F>, NetError> {
    check_patch_input::<F>(image.shape(), 4)?;
    let mut t = kernels::repeat_channels(image, spec.input_channels);
    for i in 0..=spec.tap_layer {
        let w = named(params, &format!("conv{i}.weight"))?;
        let b = named(params, &format!("conv{i}.bias"))?;
        t = eval_op(&Op::Conv2d { stride: spec.strides[i], pad: spec.pad() }, &[&t, w]);
        t = eval_op(&Op::BiasAdd, &[&t, b]);
        t = eval_op(&Op::Relu, &[&t]);
    }
    Ok(t)
}

fn named<'a, F: Scalar>(params: &'a NetworkParams<F>, name: &str) -> Result<&'a Tensor<F>, NetError> {
    params.get(name).ok_or_else(|| NetError::MissingParam {
        tag: params.tag().to_string(),
        name: name.to_string(),
    })
}
