//! The alternating optimization procedure: N_D critic updates per generator
//! update for adversarial variants, plain generator updates for the CNN
//! variants, Adam throughout, with per-epoch validation records.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::adam::{adam_step, AdamState};
use super::history::{EpochRecord, History, TrainCounters};
use super::validate::validate;
use crate::autodiff::{LeafKind, NodeId, Scalar, Tape};
use crate::data::Corpus;
use crate::error::{LossError, TrainError};
use crate::losses::{
    gradient_penalty_with, joint_generator_loss, mse_loss, perceptual_loss, wgan_losses,
    GeneratorLossParts, LossKind, LossWeights,
};
use crate::nets::{
    discriminator_forward, generator_eval, generator_forward, init_params, DiscriminatorSpec,
    FeatureExtractorSpec, GeneratorSpec, NetworkParams,
};
use crate::wvgf;

/// All hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub weights: LossWeights,
    /// Adam learning rate.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub n_epochs: usize,
    /// Critic updates per generator update (adversarial kinds only).
    pub n_critic: usize,
    pub batch_size: usize,
    pub patch_side: usize,
    pub seed: u64,
    /// Checkpoint every k epochs (the final epoch always checkpoints).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::WganVgg,
            weights: LossWeights::default(),
            alpha: 1e-5,
            beta1: 0.5,
            beta2: 0.9,
            n_epochs: 100,
            n_critic: 4,
            batch_size: 128,
            patch_side: 64,
            seed: 0,
            checkpoint_every: 10,
        }
    }
}

/// Final state of a run.
#[derive(Debug)]
pub struct TrainOutcome<F: Scalar> {
    pub generator: NetworkParams<F>,
    pub critic: Option<NetworkParams<F>>,
    pub history: History,
    /// Epoch at which a non-finite loss aborted the run, if any.
    pub diverged_at: Option<usize>,
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn loss_err(e: LossError) -> TrainError {
    TrainError::Loss(e)
}

/// The generator's adversarial term for the plain-GAN variant:
/// -mean(log sigmoid(scores)), clamp-guarded.
fn gan_generator_term<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
) -> Result<(NodeId, bool), TrainError> {
    let p = tape.sigmoid(scores).map_err(LossError::from).map_err(loss_err)?;
    let clamped = tape.value(p).data().iter().any(|&v| v <= F::zero() || v >= F::one());
    let eps = F::from_f64(1e-7);
    let pc = tape.clamp(eps, F::one() - eps, p).map_err(LossError::from).map_err(loss_err)?;
    let ln = tape.ln(pc).map_err(LossError::from).map_err(loss_err)?;
    let mean = tape.mean_all(ln).map_err(LossError::from).map_err(loss_err)?;
    let term = tape.scalar_mul(-F::one(), mean).map_err(LossError::from).map_err(loss_err)?;
    Ok((term, clamped))
}

/// Train one variant on the corpus. `extractor` must be present for the
/// VGG-flavored kinds; when present it is also used for validation records.
///
/// Deterministic given (corpus digest, config, seed): all sampling comes
/// from one seeded stream, batches are fixed-size chunks of a seeded
/// shuffle, and kernels reduce in fixed order.
pub fn train<F: Scalar>(
    corpus: &Corpus,
    config: &TrainConfig,
    extractor: Option<(&FeatureExtractorSpec, &NetworkParams<F>)>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<F>, TrainError> {
    let kind = config.loss_kind;
    if corpus.train_indices().is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if corpus.patch_side() != config.patch_side {
        return Err(TrainError::GradMismatch(format!(
            "config patch_side {} but corpus holds {}",
            config.patch_side,
            corpus.patch_side()
        )));
    }
    if kind.needs_vgg() && extractor.is_none() {
        return Err(TrainError::MissingExtractor(kind.to_string()));
    }
    if kind.is_adversarial() && config.n_critic == 0 {
        return Err(TrainError::GradMismatch("n_critic must be >= 1 for adversarial kinds".into()));
    }

    let gspec = GeneratorSpec::default();
    let dspec = DiscriminatorSpec::for_patch(config.patch_side);
    let mut generator: NetworkParams<F> =
        init_params(GeneratorSpec::TAG, &gspec.param_shapes(), mix_seed(config.seed, 0xA));
    let mut critic: Option<NetworkParams<F>> = kind.is_adversarial().then(|| {
        init_params(DiscriminatorSpec::TAG, &dspec.param_shapes(), mix_seed(config.seed, 0xB))
    });
    let mut g_state = AdamState::new(&generator);
    let mut d_state = critic.as_ref().map(AdamState::new);

    let extractor_digest_before = extractor.map(|(_, p)| p.digest());

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut history = History::default();
    let mut diverged_at = None;

    'epochs: for epoch in 1..=config.n_epochs {
        let t0 = Instant::now();
        // one pass over the training split in seeded shuffled order
        let mut order: Vec<usize> = corpus.train_indices().collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let batches: Vec<&[usize]> = order
            .chunks(config.batch_size)
            .filter(|c| c.len() == config.batch_size)
            .collect();

        let result: Result<(), TrainError> = if kind.is_adversarial() {
            let group = config.n_critic + 1;
            let n_groups = batches.len() / group;
            (0..n_groups).try_for_each(|gi| {
                for t in 0..config.n_critic {
                    critic_step(
                        corpus,
                        config,
                        &gspec,
                        &dspec,
                        &generator,
                        critic.as_mut().unwrap(),
                        d_state.as_mut().unwrap(),
                        batches[gi * group + t],
                        &mut rng,
                        &mut history.counters,
                    )?;
                }
                generator_step(
                    corpus,
                    config,
                    &gspec,
                    &dspec,
                    &mut generator,
                    &mut g_state,
                    critic.as_ref(),
                    extractor,
                    batches[gi * group + config.n_critic],
                    &mut history.counters,
                )
            })
        } else {
            batches.iter().try_for_each(|batch| {
                generator_step(
                    corpus,
                    config,
                    &gspec,
                    &dspec,
                    &mut generator,
                    &mut g_state,
                    None,
                    extractor,
                    batch,
                    &mut history.counters,
                )
            })
        };

        if let Err(err) = result {
            match err {
                TrainError::Diverged { .. } | TrainError::NonFiniteGrad(_) => {
                    log::warn!("{kind}: {err}; aborting at epoch {epoch}");
                    diverged_at = Some(epoch);
                    break 'epochs;
                }
                other => return Err(other),
            }
        }

        let stats = validate(
            &generator,
            &gspec,
            critic.as_ref().map(|d| (&dspec, d)),
            extractor,
            corpus,
            config.batch_size,
        )?;
        history.records.push(EpochRecord {
            epoch,
            mse: stats.mse,
            vgg: stats.vgg,
            w_raw: stats.w_raw,
            w_norm: stats.w_norm,
            seconds: t0.elapsed().as_secs_f64(),
        });

        if let Some(dir) = out_dir {
            std::fs::write(dir.join("history.csv"), history.to_csv())?;
            if epoch % config.checkpoint_every.max(1) == 0 || epoch == config.n_epochs {
                write_checkpoint(
                    dir,
                    kind,
                    epoch,
                    &generator,
                    critic.as_ref(),
                    &g_state,
                    d_state.as_ref(),
                )?;
            }
        }
    }

    if let (Some((_, p)), Some(before)) = (extractor, extractor_digest_before) {
        assert_eq!(p.digest(), before, "feature extractor changed during training");
    }

    Ok(TrainOutcome { generator, critic, history, diverged_at })
}

fn check_finite<F: Scalar>(tape: &Tape<F>, node: NodeId, epoch_hint: usize) -> Result<(), TrainError> {
    if !tape.value(node).all_finite() {
        return Err(TrainError::Diverged { epoch: epoch_hint });
    }
    Ok(())
}

/// Gradients of `loss` with respect to `params`, aligned with entry order.
fn grads_for<F: Scalar>(
    tape: &mut Tape<F>,
    loss: NodeId,
    params: &NetworkParams<F>,
    bound: &crate::nets::BoundParams,
) -> Result<Vec<crate::autodiff::Tensor<F>>, TrainError> {
    let names: Vec<String> = params.entries().iter().map(|(n, _)| n.clone()).collect();
    let ids = bound.ids_for(&names)?;
    let mut map = tape.backward(loss, &ids)?;
    Ok(ids.iter().map(|id| map.remove(id).expect("gradient for bound id")).collect())
}

#[allow(clippy::too_many_arguments)]
fn critic_step<F: Scalar>(
    corpus: &Corpus,
    config: &TrainConfig,
    gspec: &GeneratorSpec,
    dspec: &DiscriminatorSpec,
    generator: &NetworkParams<F>,
    critic: &mut NetworkParams<F>,
    d_state: &mut AdamState<F>,
    batch: &[usize],
    rng: &mut ChaCha20Rng,
    counters: &mut TrainCounters,
) -> Result<(), TrainError> {
    let z = corpus.batch_z::<F>(batch);
    let x = corpus.batch_x::<F>(batch);
    // G is fixed during a critic update: detached samples
    let gz = generator_eval(generator, gspec, &z)?;

    let mut tape = Tape::new();
    let dbound = critic.bind(&mut tape, LeafKind::Param);
    let xid = tape.constant(x.clone());
    let gzid = tape.constant(gz.clone());
    let sx = discriminator_forward(&mut tape, &dbound, dspec, xid)?;
    let sgz = discriminator_forward(&mut tape, &dbound, dspec, gzid)?;

    let d_loss = if config.loss_kind.uses_gradient_penalty() {
        let epsilons: Vec<F> = (0..batch.len()).map(|_| F::from_f64(rng.gen::<f64>())).collect();
        let penalty = gradient_penalty_with(
            &mut tape,
            |t, xhat| discriminator_forward(t, &dbound, dspec, xhat).map_err(LossError::from),
            &x,
            &gz,
            &epsilons,
            F::from_f64(config.weights.lambda_gp),
        )
        .map_err(loss_err)?;
        let (critic_loss, _) = wgan_losses(&mut tape, sx, sgz, Some(penalty)).map_err(loss_err)?;
        critic_loss
    } else {
        // original GAN: binary cross-entropy on sigmoid probabilities
        let px = tape.sigmoid(sx).map_err(LossError::from).map_err(loss_err)?;
        let pgz = tape.sigmoid(sgz).map_err(LossError::from).map_err(loss_err)?;
        let (d_loss, _, clamped) = crate::losses::gan_losses(&mut tape, px, pgz).map_err(loss_err)?;
        if clamped {
            counters.gan_clamp_events += 1;
        }
        d_loss
    };
    check_finite(&tape, d_loss, 0)?;
    let grads = grads_for(&mut tape, d_loss, critic, &dbound)?;
    adam_step(critic, &grads, d_state, config.alpha, config.beta1, config.beta2)?;
    counters.critic_updates += 1;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generator_step<F: Scalar>(
    corpus: &Corpus,
    config: &TrainConfig,
    gspec: &GeneratorSpec,
    dspec: &DiscriminatorSpec,
    generator: &mut NetworkParams<F>,
    g_state: &mut AdamState<F>,
    critic: Option<&NetworkParams<F>>,
    extractor: Option<(&FeatureExtractorSpec, &NetworkParams<F>)>,
    batch: &[usize],
    counters: &mut TrainCounters,
) -> Result<(), TrainError> {
    let kind = config.loss_kind;
    let z = corpus.batch_z::<F>(batch);
    let x = corpus.batch_x::<F>(batch);

    let mut tape = Tape::new();
    let gbound = generator.bind(&mut tape, LeafKind::Param);
    let zid = tape.constant(z);
    let xid = tape.constant(x);
    let gz = generator_forward(&mut tape, &gbound, gspec, zid)?;

    let mut parts = GeneratorLossParts::default();
    if kind.needs_mse() {
        parts.mse = Some(mse_loss(&mut tape, gz, xid).map_err(loss_err)?);
    }
    if kind.needs_vgg() {
        let (fspec, fparams) = extractor.expect("validated above");
        let fbound = fparams.bind(&mut tape, LeafKind::Const);
        parts.vgg = Some(perceptual_loss(&mut tape, &fbound, fspec, gz, xid).map_err(loss_err)?);
    }
    if kind.is_adversarial() {
        let dbound = critic.expect("adversarial kinds train a critic").bind(&mut tape, LeafKind::Const);
        let scores = discriminator_forward(&mut tape, &dbound, dspec, gz)?;
        let adv = if kind.uses_sigmoid_head() {
            let (term, clamped) = gan_generator_term(&mut tape, scores)?;
            if clamped {
                counters.gan_clamp_events += 1;
            }
            term
        } else {
            let mean = tape.mean_all(scores).map_err(LossError::from).map_err(loss_err)?;
            tape.scalar_mul(-F::one(), mean).map_err(LossError::from).map_err(loss_err)?
        };
        parts.adversarial = Some(adv);
    }
    let loss = joint_generator_loss(&mut tape, kind, parts, &config.weights).map_err(loss_err)?;
    check_finite(&tape, loss, 0)?;
    let grads = grads_for(&mut tape, loss, generator, &gbound)?;
    adam_step(generator, &grads, g_state, config.alpha, config.beta1, config.beta2)?;
    counters.generator_updates += 1;
    Ok(())
}

/// Checkpoint: generator (and critic) weights plus the Adam moment tensors,
/// one container file named `{kind}_epoch{N}.wvgf`.
fn write_checkpoint<F: Scalar>(
    dir: &Path,
    kind: LossKind,
    epoch: usize,
    generator: &NetworkParams<F>,
    critic: Option<&NetworkParams<F>>,
    g_state: &AdamState<F>,
    d_state: Option<&AdamState<F>>,
) -> Result<(), TrainError> {
    let mut tensors: Vec<(String, crate::autodiff::Tensor<f32>)> = Vec::new();
    for (name, t) in generator.entries() {
        tensors.push((format!("{}/{}", generator.tag(), name), t.cast::<f32>()));
    }
    for (name, t) in g_state.storage_entries(generator) {
        tensors.push((format!("adam.generator/{name}"), t));
    }
    if let (Some(d), Some(ds)) = (critic, d_state) {
        for (name, t) in d.entries() {
            tensors.push((format!("{}/{}", d.tag(), name), t.cast::<f32>()));
        }
        for (name, t) in ds.storage_entries(d) {
            tensors.push((format!("adam.critic/{name}"), t));
        }
    }
    let path = dir.join(format!("{kind}_epoch{epoch}.wvgf"));
    wvgf::write_tensors(&path, &tensors)?;
    Ok(())
}

/// Pull one tag's parameters out of a (possibly mixed-tag) weights file.
pub fn load_params_from_file<F: Scalar>(
    path: &Path,
    tag: &str,
) -> Result<NetworkParams<F>, TrainError> {
    let tensors = wvgf::read_tensors(path)?;
    let filtered: Vec<(String, crate::autodiff::Tensor<f32>)> = tensors
        .into_iter()
        .filter(|(name, _)| name.starts_with(&format!("{tag}/")))
        .collect();
    if filtered.is_empty() {
        return Err(TrainError::Net(crate::error::NetError::TagMismatch {
            expected: tag.to_string(),
            got: "no matching entries in file".to_string(),
        }));
    }
    Ok(NetworkParams::from_storage(filtered)?)
}
