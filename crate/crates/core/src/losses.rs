//! Every training objective: pixel MSE, perceptual feature distance, the
//! Wasserstein critic/generator losses with gradient penalty, the original
//! minimax GAN losses, the per-variant joint generator objective, and the
//! Wasserstein surrogate tracked during validation.

use crate::autodiff::{LeafKind, NodeId, Scalar, Tape, Tensor};
use crate::error::{LossError, TapeError};
use crate::nets::{feature_forward, BoundParams, FeatureExtractorSpec};

/// Weighting parameters of the composite objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Gradient-penalty weight.
    pub lambda_gp: f64,
    /// Perceptual-loss weight in the joint objective.
    pub lambda1: f64,
    /// MSE weight in the joint objective.
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_gp: 10.0, lambda1: 0.1, lambda2: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.lambda_gp < 0.0 || self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(LossError::MissingComponent {
                kind: "weights".into(),
                component: "non-negative lambda",
            });
        }
        Ok(())
    }
}

/// The six trained network variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    CnnMse,
    CnnVgg,
    WganMse,
    WganVgg,
    Wgan,
    Gan,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::CnnMse,
        LossKind::CnnVgg,
        LossKind::WganMse,
        LossKind::WganVgg,
        LossKind::Wgan,
        LossKind::Gan,
    ];

    pub fn is_adversarial(&self) -> bool {
        !matches!(self, LossKind::CnnMse | LossKind::CnnVgg)
    }

    pub fn needs_vgg(&self) -> bool {
        matches!(self, LossKind::CnnVgg | LossKind::WganVgg)
    }

    pub fn needs_mse(&self) -> bool {
        matches!(self, LossKind::CnnMse | LossKind::WganMse)
    }

    /// Plain-GAN variants append a sigmoid head and use log losses.
    pub fn uses_sigmoid_head(&self) -> bool {
        matches!(self, LossKind::Gan)
    }

    /// The WGAN variants regularize the critic with the gradient penalty.
    pub fn uses_gradient_penalty(&self) -> bool {
        matches!(self, LossKind::WganMse | LossKind::WganVgg | LossKind::Wgan)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossKind::CnnMse => "cnn-mse",
            LossKind::CnnVgg => "cnn-vgg",
            LossKind::WganMse => "wgan-mse",
            LossKind::WganVgg => "wgan-vgg",
            LossKind::Wgan => "wgan",
            LossKind::Gan => "gan",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnn-mse" => Ok(LossKind::CnnMse),
            "cnn-vgg" => Ok(LossKind::CnnVgg),
            "wgan-mse" => Ok(LossKind::WganMse),
            "wgan-vgg" => Ok(LossKind::WganVgg),
            "wgan" => Ok(LossKind::Wgan),
            "gan" => Ok(LossKind::Gan),
            other => Err(format!(
                "unknown loss kind '{other}' (expected cnn-mse|cnn-vgg|wgan-mse|wgan-vgg|wgan|gan)"
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Pixel and perceptual losses
// ---------------------------------------------------------------------------

/// Mean over the batch of per-patch squared Frobenius distance divided by
/// the pixel count: with single-channel [B, 1, N, N] inputs this is exactly
/// the mean over all elements of (gz - x)^2.
pub fn mse_loss<F: Scalar>(tape: &mut Tape<F>, gz: NodeId, x: NodeId) -> Result<NodeId, LossError> {
    let diff = tape.sub(gz, x)?;
    let sq = tape.square(diff)?;
    Ok(tape.mean_all(sq)?)
}

/// Feature-space distance: mean over the batch of
/// ||phi(gz) - phi(x)||_F^2 / (w * h * d).
///
/// The extractor must be bound as constants (frozen); feeding one bound as
/// trainable parameters is rejected.
pub fn perceptual_loss<F: Scalar>(
    tape: &mut Tape<F>,
    extractor: &BoundParams,
    spec: &FeatureExtractorSpec,
    gz: NodeId,
    x: NodeId,
) -> Result<NodeId, LossError> {
    if extractor.kind() != LeafKind::Const {
        return Err(LossError::Tape(TapeError::ShapeMismatch {
            op: "perceptual_loss",
            detail: "feature extractor must be frozen (bound as constants) during denoiser training"
                .into(),
        }));
    }
    let fgz = feature_forward(tape, extractor, spec, gz)?;
    let fx = feature_forward(tape, extractor, spec, x)?;
    let diff = tape.sub(fgz, fx)?;
    let sq = tape.square(diff)?;
    Ok(tape.mean_all(sq)?)
}

// ---------------------------------------------------------------------------
// Gradient penalty
// ---------------------------------------------------------------------------

/// Interpolates x-hat per sample, runs the critic, differentiates the score
/// sum with respect to x-hat through the recorded graph, and returns
/// lambda * mean((||grad||_2 - 1)^2).
///
/// The returned node is differentiable w.r.t. everything the critic read
/// (its parameters in particular), because the adjoint pass is recorded as
/// ordinary tape nodes.
pub fn gradient_penalty_with<F, C>(
    tape: &mut Tape<F>,
    critic: C,
    x: &Tensor<F>,
    gz: &Tensor<F>,
    epsilons: &[F],
    lambda_gp: F,
) -> Result<NodeId, LossError>
where
    F: Scalar,
    C: FnOnce(&mut Tape<F>, NodeId) -> Result<NodeId, LossError>,
{
    if x.shape() != gz.shape() {
        return Err(LossError::Tape(TapeError::ShapeMismatch {
            op: "gradient_penalty",
            detail: format!("x {:?} vs G(z) {:?}", x.shape(), gz.shape()),
        }));
    }
    let batch = x.shape()[0];
    if epsilons.len() != batch {
        return Err(LossError::Tape(TapeError::ShapeMismatch {
            op: "gradient_penalty",
            detail: format!("{} epsilons for batch {batch}", epsilons.len()),
        }));
    }
    // x-hat = eps * x + (1 - eps) * gz, built numerically: the penalty
    // differentiates with respect to x-hat itself, so it enters as a leaf.
    let per = x.numel() / batch;
    let mut xhat = vec![F::zero(); x.numel()];
    for b in 0..batch {
        let e = epsilons[b];
        let one_m = F::one() - e;
        for i in 0..per {
            let idx = b * per + i;
            xhat[idx] = e * x.data()[idx] + one_m * gz.data()[idx];
        }
    }
    let xhat_id = tape.leaf(Tensor::new(x.shape().to_vec(), xhat), LeafKind::Input);

    let scores = critic(tape, xhat_id)?;
    let total = tape.sum_all(scores)?;
    let grads = tape.backward_graph(total, &[xhat_id])?;
    let grad_xhat = grads[&xhat_id];

    let sq = tape.square(grad_xhat)?;
    let per_sample = tape.sum_per_sample(sq)?;
    let norms = tape.sqrt(per_sample)?;
    let shifted = tape.add_scalar(-F::one(), norms)?;
    let sq_dev = tape.square(shifted)?;
    let mean = tape.mean_all(sq_dev)?;
    Ok(tape.scalar_mul(lambda_gp, mean)?)
}

// ---------------------------------------------------------------------------
// Adversarial score losses
// ---------------------------------------------------------------------------

/// Critic and generator Wasserstein losses from per-sample scores:
/// critic = mean(D(G(z))) - mean(D(x)) + penalty, generator = -mean(D(G(z))).
pub fn wgan_losses<F: Scalar>(
    tape: &mut Tape<F>,
    d_of_x: NodeId,
    d_of_gz: NodeId,
    penalty: Option<NodeId>,
) -> Result<(NodeId, NodeId), LossError> {
    let mean_x = tape.mean_all(d_of_x)?;
    let mean_gz = tape.mean_all(d_of_gz)?;
    let gap = tape.sub(mean_gz, mean_x)?;
    let critic = match penalty {
        Some(p) => tape.add(gap, p)?,
        None => gap,
    };
    let generator = tape.scalar_mul(-F::one(), mean_gz)?;
    Ok((critic, generator))
}

/// Original minimax losses on sigmoid probabilities, with the non-saturating
/// generator form. Probabilities touching 0 or 1 are clamped to
/// [eps, 1 - eps] with eps = 1e-7; the returned flag reports whether any
/// clamping occurred.
pub fn gan_losses<F: Scalar>(
    tape: &mut Tape<F>,
    p_of_x: NodeId,
    p_of_gz: NodeId,
) -> Result<(NodeId, NodeId, bool), LossError> {
    let eps = F::from_f64(1e-7);
    let one_m_eps = F::one() - eps;
    let clamped = [p_of_x, p_of_gz].iter().any(|&p| {
        tape.value(p).data().iter().any(|&v| v <= F::zero() || v >= F::one())
    });

    let px = tape.clamp(eps, one_m_eps, p_of_x)?;
    let pgz = tape.clamp(eps, one_m_eps, p_of_gz)?;

    // d_loss = -mean(log p_x) - mean(log(1 - p_gz))
    let ln_px = tape.ln(px)?;
    let mean_ln_px = tape.mean_all(ln_px)?;
    let neg_pgz = tape.scalar_mul(-F::one(), pgz)?;
    let one_minus_pgz = tape.add_scalar(F::one(), neg_pgz)?;
    let ln_1m = tape.ln(one_minus_pgz)?;
    let mean_ln_1m = tape.mean_all(ln_1m)?;
    let sum = tape.add(mean_ln_px, mean_ln_1m)?;
    let d_loss = tape.scalar_mul(-F::one(), sum)?;

    // non-saturating generator: -mean(log p_gz)
    let ln_pgz = tape.ln(pgz)?;
    let mean_ln_pgz = tape.mean_all(ln_pgz)?;
    let g_loss = tape.scalar_mul(-F::one(), mean_ln_pgz)?;

    Ok((d_loss, g_loss, clamped))
}

// ---------------------------------------------------------------------------
// Joint generator objective
// ---------------------------------------------------------------------------

/// Scalar loss components available when assembling a joint objective.
/// `adversarial` is the generator's adversarial term itself
/// (-mean(D(G(z))) for Wasserstein variants, -mean(log D(G(z))) for GAN).
#[derive(Debug, Clone, Copy, Default)]
pub struct GeneratorLossParts {
    pub adversarial: Option<NodeId>,
    pub mse: Option<NodeId>,
    pub vgg: Option<NodeId>,
}

/// Compose the per-variant generator objective:
///
/// | kind     | objective                        |
/// |----------|----------------------------------|
/// | cnn-mse  | L_MSE                            |
/// | cnn-vgg  | L_VGG                            |
/// | wgan-mse | lambda2 * L_MSE + adversarial    |
/// | wgan-vgg | lambda1 * L_VGG + adversarial    |
/// | wgan     | adversarial                      |
/// | gan      | adversarial                      |
pub fn joint_generator_loss<F: Scalar>(
    tape: &mut Tape<F>,
    kind: LossKind,
    parts: GeneratorLossParts,
    weights: &LossWeights,
) -> Result<NodeId, LossError> {
    weights.validate()?;
    let need = |part: Option<NodeId>, component: &'static str| {
        part.ok_or(LossError::MissingComponent { kind: kind.to_string(), component })
    };
    let node = match kind {
        LossKind::CnnMse => need(parts.mse, "mse")?,
        LossKind::CnnVgg => need(parts.vgg, "vgg")?,
        LossKind::WganMse => {
            let mse = need(parts.mse, "mse")?;
            let adv = need(parts.adversarial, "adversarial")?;
            let weighted = tape.scalar_mul(F::from_f64(weights.lambda2), mse)?;
            tape.add(weighted, adv)?
        }
        LossKind::WganVgg => {
            let vgg = need(parts.vgg, "vgg")?;
            let adv = need(parts.adversarial, "adversarial")?;
            let weighted = tape.scalar_mul(F::from_f64(weights.lambda1), vgg)?;
            tape.add(weighted, adv)?
        }
        LossKind::Wgan | LossKind::Gan => need(parts.adversarial, "adversarial")?,
    };
    Ok(node)
}

// ---------------------------------------------------------------------------
// Wasserstein estimate (validation metric)
// ---------------------------------------------------------------------------

/// |mean(D(G(z))) - mean(D(x))|, reported raw and normalized by the patch
/// pixel count (the tracked surrogate is otherwise unnormalized).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WassersteinEstimate {
    pub raw: f64,
    pub normalized: f64,
}

pub fn wasserstein_estimate(
    d_of_x: &[f64],
    d_of_gz: &[f64],
    pixels_per_patch: usize,
) -> Result<WassersteinEstimate, LossError> {
    if d_of_x.is_empty() || d_of_gz.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let raw = (mean(d_of_gz) - mean(d_of_x)).abs();
    Ok(WassersteinEstimate { raw, normalized: raw / pixels_per_patch as f64 })
}

/// Plain numeric per-element mean squared error (the Eq. 4 value used by
/// validation, computed without a tape).
pub fn mse_value<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "mse_value shape mismatch");
    let n = a.numel() as f64;
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests;
