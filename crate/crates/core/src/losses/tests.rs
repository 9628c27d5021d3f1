use super::*;
use crate::autodiff::{check_gradients_sampled, rel_err, LeafKind, Tape};
use crate::nets::{
    discriminator_forward, generator_forward, init_params, DiscriminatorSpec, FeatureExtractorSpec,
    GeneratorSpec, NetworkParams,
};

fn pseudo_random(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            (z as f64 / u64::MAX as f64) * 2.0 - 1.0
        })
        .collect();
    Tensor::new(shape, data)
}

#[test]
fn mse_identical_inputs_is_zero() {
    let mut tape = Tape::new();
    let x = tape.constant(pseudo_random(vec![2, 1, 4, 4], 1));
    let loss = mse_loss(&mut tape, x, x).unwrap();
    assert_eq!(tape.value(loss).scalar_value(), 0.0);
}

#[test]
fn mse_constant_unit_difference_is_one() {
    // 2x2 patches with gz - x = 1 everywhere: ||diff||_F^2 / N^2 = 4/4 = 1
    let mut tape = Tape::new();
    let gz = tape.constant(Tensor::full(vec![3, 1, 2, 2], 1.5f64));
    let x = tape.constant(Tensor::full(vec![3, 1, 2, 2], 0.5f64));
    let loss = mse_loss(&mut tape, gz, x).unwrap();
    assert!((tape.value(loss).scalar_value() - 1.0).abs() < 1e-15);
}

#[test]
fn mse_matches_direct_summation_oracle() {
    let gz = pseudo_random(vec![3, 1, 5, 5], 2);
    let x = pseudo_random(vec![3, 1, 5, 5], 3);
    // oracle stated the paper's way: per-sample Frobenius^2 / N^2, then the
    // batch mean
    let (b, n2) = (3usize, 25usize);
    let mut acc = 0.0;
    for bi in 0..b {
        let mut fro = 0.0;
        for i in 0..n2 {
            let d = gz.data()[bi * n2 + i] - x.data()[bi * n2 + i];
            fro += d * d;
        }
        acc += fro / n2 as f64;
    }
    let oracle = acc / b as f64;

    let mut tape = Tape::new();
    let gzid = tape.constant(gz.clone());
    let xid = tape.constant(x.clone());
    let loss = mse_loss(&mut tape, gzid, xid).unwrap();
    assert!(rel_err(tape.value(loss).scalar_value(), oracle) < 1e-6);
    assert!(rel_err(mse_value(&gz, &x), oracle) < 1e-12);
}

fn tiny_extractor() -> (FeatureExtractorSpec, NetworkParams<f64>) {
    let spec = FeatureExtractorSpec {
        conv_filters: vec![4, 4],
        strides: vec![1, 2],
        kernel: 3,
        tap_layer: 1,
        input_channels: 3,
    };
    let params = init_params(FeatureExtractorSpec::TAG, &spec.param_shapes(), 99);
    (spec, params)
}

#[test]
fn perceptual_identical_inputs_is_zero() {
    let (spec, params) = tiny_extractor();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, LeafKind::Const);
    let x = tape.constant(pseudo_random(vec![2, 1, 8, 8], 4));
    let loss = perceptual_loss(&mut tape, &bound, &spec, x, x).unwrap();
    assert_eq!(tape.value(loss).scalar_value(), 0.0);
}

#[test]
fn perceptual_rejects_unfrozen_extractor() {
    let (spec, params) = tiny_extractor();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, LeafKind::Param);
    let x = tape.constant(pseudo_random(vec![1, 1, 8, 8], 5));
    assert!(perceptual_loss(&mut tape, &bound, &spec, x, x).is_err());
}

#[test]
fn perceptual_gradient_matches_finite_differences() {
    let (spec, params) = tiny_extractor();
    let x_ref = pseudo_random(vec![1, 1, 8, 8], 6);
    let report = check_gradients_sampled(
        |tape: &mut Tape<f64>, leaves: &[crate::autodiff::NodeId]| {
            let bound = params.bind(tape, LeafKind::Const);
            let xr = tape.constant(x_ref.clone());
            perceptual_loss(tape, &bound, &spec, leaves[0], xr).map_err(|e| match e {
                LossError::Tape(t) => t,
                other => TapeError::ShapeMismatch { op: "loss", detail: other.to_string() },
            })
        },
        &[pseudo_random(vec![1, 1, 8, 8], 7)],
        1e-5,
        32,
        13,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-3, "rel err {}", report.max_rel_err);
}

#[test]
fn perceptual_quadratic_in_feature_difference() {
    // A one-layer extractor with non-negative weights and zero bias is
    // positively homogeneous on non-negative inputs, so doubling the input
    // difference doubles the feature difference and quadruples the loss.
    let spec = FeatureExtractorSpec {
        conv_filters: vec![2],
        strides: vec![1],
        kernel: 3,
        tap_layer: 0,
        input_channels: 3,
    };
    let weight = pseudo_random(vec![2, 3, 3, 3], 8).map(|v| v.abs() + 0.05);
    let params = NetworkParams::new(
        FeatureExtractorSpec::TAG,
        vec![
            ("conv0.weight".to_string(), weight),
            ("conv0.bias".to_string(), Tensor::zeros(vec![2])),
        ],
    );
    let base = pseudo_random(vec![1, 1, 6, 6], 9).map(|v| v.abs());
    let zero = Tensor::zeros(vec![1, 1, 6, 6]);
    let doubled = base.map(|v| v * 2.0);

    let loss_of = |a: &Tensor<f64>, b: &Tensor<f64>| {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, LeafKind::Const);
        let aid = tape.constant(a.clone());
        let bid = tape.constant(b.clone());
        let l = perceptual_loss(&mut tape, &bound, &spec, aid, bid).unwrap();
        tape.value(l).scalar_value()
    };
    let l1 = loss_of(&base, &zero);
    let l2 = loss_of(&doubled, &zero);
    assert!(rel_err(l2, 4.0 * l1) < 1e-12, "{l2} vs 4*{l1}");
}

/// Linear critic D(x) = <a, x-hat_flat>; the per-sample gradient is exactly
/// `a`, so the penalty depends only on ||a||.
fn linear_critic(a: Tensor<f64>) -> impl FnOnce(&mut Tape<f64>, crate::autodiff::NodeId) -> Result<crate::autodiff::NodeId, LossError> {
    move |tape, xhat| {
        let batch = tape.shape(xhat)[0];
        let flat = tape.flatten(xhat)?;
        let w = tape.constant(a);
        let s = tape.matmul(flat, w)?;
        Ok(tape.reshape(s, vec![batch])?)
    }
}

#[test]
fn penalty_zero_for_unit_norm_linear_critic() {
    let mut tape = Tape::new();
    // a = (1, 0, 0, 0): ||a|| = 1
    let mut a = vec![0.0; 4];
    a[0] = 1.0;
    let x = pseudo_random(vec![2, 1, 2, 2], 10);
    let gz = pseudo_random(vec![2, 1, 2, 2], 11);
    let p = gradient_penalty_with(
        &mut tape,
        linear_critic(Tensor::new(vec![4, 1], a)),
        &x,
        &gz,
        &[0.3, 0.8],
        10.0,
    )
    .unwrap();
    assert!(tape.value(p).scalar_value().abs() < 1e-6);
}

#[test]
fn penalty_for_norm_two_linear_critic_is_exactly_lambda() {
    // a = (1,1,1,1): ||a|| = 2; penalty = 10 * (2 - 1)^2 = 10
    let mut tape = Tape::new();
    let x = pseudo_random(vec![3, 1, 2, 2], 12);
    let gz = pseudo_random(vec![3, 1, 2, 2], 13);
    let p = gradient_penalty_with(
        &mut tape,
        linear_critic(Tensor::new(vec![4, 1], vec![1.0; 4])),
        &x,
        &gz,
        &[0.1, 0.5, 0.9],
        10.0,
    )
    .unwrap();
    assert!((tape.value(p).scalar_value() - 10.0).abs() < 1e-6);
}

#[test]
fn penalty_invariant_under_batch_permutation() {
    let x = pseudo_random(vec![4, 1, 3, 3], 14);
    let gz = pseudo_random(vec![4, 1, 3, 3], 15);
    let eps = [0.2, 0.4, 0.6, 0.8];
    let w1 = pseudo_random(vec![9, 3], 16);
    let w2 = pseudo_random(vec![3, 1], 17);

    let critic = |w1: Tensor<f64>, w2: Tensor<f64>| {
        move |tape: &mut Tape<f64>, xhat: crate::autodiff::NodeId| -> Result<crate::autodiff::NodeId, LossError> {
            let batch = tape.shape(xhat)[0];
            let flat = tape.flatten(xhat)?;
            let w1 = tape.constant(w1);
            let h = tape.matmul(flat, w1)?;
            let h = tape.sigmoid(h)?;
            let w2 = tape.constant(w2);
            let s = tape.matmul(h, w2)?;
            Ok(tape.reshape(s, vec![batch])?)
        }
    };

    let value = |x: &Tensor<f64>, gz: &Tensor<f64>, eps: &[f64]| {
        let mut tape = Tape::new();
        let p =
            gradient_penalty_with(&mut tape, critic(w1.clone(), w2.clone()), x, gz, eps, 10.0).unwrap();
        tape.value(p).scalar_value()
    };

    let base = value(&x, &gz, &eps);
    // reverse the batch
    let permute = |t: &Tensor<f64>| {
        let per = t.numel() / 4;
        let mut data = vec![0.0; t.numel()];
        for b in 0..4 {
            data[(3 - b) * per..(4 - b) * per].copy_from_slice(&t.data()[b * per..(b + 1) * per]);
        }
        Tensor::new(t.shape().to_vec(), data)
    };
    let eps_rev = [0.8, 0.6, 0.4, 0.2];
    let permuted = value(&permute(&x), &permute(&gz), &eps_rev);
    assert!(rel_err(base, permuted) < 1e-12, "{base} vs {permuted}");
}

#[test]
fn penalty_gradient_wrt_critic_weights_matches_finite_differences() {
    // Two-layer critic with smooth activation; gradient flows through the
    // recorded double-backward path.
    let x = pseudo_random(vec![2, 1, 3, 3], 18);
    let gz = pseudo_random(vec![2, 1, 3, 3], 19);
    let eps = [0.25, 0.75];
    let report = check_gradients_sampled(
        |tape: &mut Tape<f64>, leaves: &[crate::autodiff::NodeId]| {
            let (w1, w2) = (leaves[0], leaves[1]);
            gradient_penalty_with(
                tape,
                |tape: &mut Tape<f64>, xhat: crate::autodiff::NodeId| {
                    let batch = tape.shape(xhat)[0];
                    let flat = tape.flatten(xhat)?;
                    let h = tape.matmul(flat, w1)?;
                    let h = tape.sigmoid(h)?;
                    let s = tape.matmul(h, w2)?;
                    Ok(tape.reshape(s, vec![batch])?)
                },
                &x,
                &gz,
                &eps,
                10.0,
            )
            .map_err(|e| match e {
                LossError::Tape(t) => t,
                other => TapeError::ShapeMismatch { op: "penalty", detail: other.to_string() },
            })
        },
        &[pseudo_random(vec![9, 4], 20), pseudo_random(vec![4, 1], 21)],
        1e-5,
        40,
        55,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-3, "rel err {}", report.max_rel_err);
}

#[test]
fn penalty_requires_recording_tape() {
    let mut tape = Tape::new_inference();
    let x = pseudo_random(vec![1, 1, 2, 2], 22);
    let gz = pseudo_random(vec![1, 1, 2, 2], 23);
    let r = gradient_penalty_with(
        &mut tape,
        linear_critic(Tensor::new(vec![4, 1], vec![1.0; 4])),
        &x,
        &gz,
        &[0.5],
        10.0,
    );
    assert!(r.is_err());
}

#[test]
fn wgan_loss_arithmetic() {
    let mut tape = Tape::new();
    // symmetric scores, no penalty -> critic loss 0
    let s = tape.constant(Tensor::new(vec![2], vec![1.0f64, 3.0]));
    let (critic, generator) = wgan_losses(&mut tape, s, s, None).unwrap();
    assert_eq!(tape.value(critic).scalar_value(), 0.0);
    assert_eq!(tape.value(generator).scalar_value(), -2.0);

    // d_of_x = [3], d_of_gz = [1], penalty = 2 -> 1 - 3 + 2 = 0
    let dx = tape.constant(Tensor::new(vec![1], vec![3.0f64]));
    let dgz = tape.constant(Tensor::new(vec![1], vec![1.0f64]));
    let pen = tape.constant(Tensor::scalar(2.0f64));
    let (critic, _) = wgan_losses(&mut tape, dx, dgz, Some(pen)).unwrap();
    assert_eq!(tape.value(critic).scalar_value(), 0.0);
}

#[test]
fn gan_loss_values() {
    let mut tape = Tape::new();
    let half = tape.constant(Tensor::new(vec![2], vec![0.5f64, 0.5]));
    let (d_loss, g_loss, clamped) = gan_losses(&mut tape, half, half).unwrap();
    assert!(!clamped);
    assert!((tape.value(d_loss).scalar_value() - 2.0 * (2.0f64).ln()).abs() < 1e-12);
    assert!((tape.value(g_loss).scalar_value() - (2.0f64).ln()).abs() < 1e-12);

    // perfect discriminator: p_x -> 1, p_gz -> 0; loss -> 0 (and clamped)
    let ones = tape.constant(Tensor::new(vec![2], vec![1.0f64, 1.0]));
    let zeros = tape.constant(Tensor::new(vec![2], vec![0.0f64, 0.0]));
    let (d_loss, _, clamped) = gan_losses(&mut tape, ones, zeros).unwrap();
    assert!(clamped);
    assert!(tape.value(d_loss).scalar_value() < 1e-6);
}

#[test]
fn joint_loss_compositions() {
    let weights = LossWeights::default();
    let mut tape = Tape::new();
    let mse = tape.constant(Tensor::scalar(0.25f64));
    let vgg = tape.constant(Tensor::scalar(2.0f64));
    let adv = tape.constant(Tensor::scalar(-0.5f64));

    // CNN-MSE passes the MSE through unchanged
    let l = joint_generator_loss(
        &mut tape,
        LossKind::CnnMse,
        GeneratorLossParts { mse: Some(mse), ..Default::default() },
        &weights,
    )
    .unwrap();
    assert_eq!(tape.value(l).scalar_value(), 0.25);

    // WGAN-VGG: lambda1 * vgg + adv = 0.1*2.0 - 0.5 = -0.3
    let l = joint_generator_loss(
        &mut tape,
        LossKind::WganVgg,
        GeneratorLossParts { vgg: Some(vgg), adversarial: Some(adv), ..Default::default() },
        &weights,
    )
    .unwrap();
    assert!((tape.value(l).scalar_value() - (-0.3)).abs() < 1e-12);

    // WGAN: adversarial term only
    let l = joint_generator_loss(
        &mut tape,
        LossKind::Wgan,
        GeneratorLossParts { adversarial: Some(adv), ..Default::default() },
        &weights,
    )
    .unwrap();
    assert_eq!(tape.value(l).scalar_value(), -0.5);

    // missing component rejected
    let err = joint_generator_loss(
        &mut tape,
        LossKind::WganMse,
        GeneratorLossParts { adversarial: Some(adv), ..Default::default() },
        &weights,
    );
    assert!(matches!(err, Err(LossError::MissingComponent { .. })));
}

#[test]
fn wasserstein_estimate_values() {
    assert_eq!(wasserstein_estimate(&[1.0, 2.0], &[1.0, 2.0], 16).unwrap().raw, 0.0);
    let est = wasserstein_estimate(&[2.0, 4.0], &[1.0, 1.0], 16).unwrap();
    assert_eq!(est.raw, 2.0);
    assert_eq!(est.normalized, 2.0 / 16.0);
    assert!(wasserstein_estimate(&[], &[1.0], 4).is_err());
}

#[test]
fn loss_kind_round_trips_through_strings() {
    for kind in LossKind::ALL {
        let s = kind.to_string();
        assert_eq!(s.parse::<LossKind>().unwrap(), kind);
    }
    assert!("mse".parse::<LossKind>().is_err());
}

/// For every loss kind, the full generator objective (tiny networks)
/// matches finite differences with respect to generator parameters.
#[test]
fn joint_objective_gradient_matches_fd_for_every_kind() {
    let gspec = GeneratorSpec { n_layers: 3, hidden_filters: 4, kernel: 3 };
    let dspec = DiscriminatorSpec {
        conv_filters: vec![4, 4],
        strides: vec![1, 2],
        kernel: 3,
        leaky_slope: 0.2,
        fc_hidden: 8,
        patch_side: 9,
    };
    let (fspec, fparams) = tiny_extractor();
    let dparams: NetworkParams<f64> = init_params(DiscriminatorSpec::TAG, &dspec.param_shapes(), 31);
    let gparams: NetworkParams<f64> = init_params(GeneratorSpec::TAG, &gspec.param_shapes(), 32);
    let z = pseudo_random(vec![2, 1, 9, 9], 33).map(|v| v * 0.5 + 0.5);
    let x = pseudo_random(vec![2, 1, 9, 9], 34).map(|v| v * 0.5 + 0.5);
    let weights = LossWeights::default();

    let g_names: Vec<String> = gspec.param_shapes().into_iter().map(|(n, _)| n).collect();
    let g_point: Vec<Tensor<f64>> =
        g_names.iter().map(|n| gparams.get(n).unwrap().clone()).collect();

    for kind in LossKind::ALL {
        let report = check_gradients_sampled(
            |tape: &mut Tape<f64>, leaves: &[crate::autodiff::NodeId]| {
                let flat = |e: LossError| match e {
                    LossError::Tape(t) => t,
                    other => TapeError::ShapeMismatch { op: "obj", detail: other.to_string() },
                };
                let nflat = |e: crate::error::NetError| match e {
                    crate::error::NetError::Tape(t) => t,
                    other => TapeError::ShapeMismatch { op: "net", detail: other.to_string() },
                };
                // generator params from the leaves under test
                let mut bound_ids = std::collections::HashMap::new();
                for (name, id) in g_names.iter().zip(leaves.iter()) {
                    bound_ids.insert(name.clone(), *id);
                }
                let gbound = BoundParams::from_ids(GeneratorSpec::TAG, LeafKind::Param, bound_ids);
                let zid = tape.constant(z.clone());
                let xid = tape.constant(x.clone());
                let gz = generator_forward(tape, &gbound, &gspec, zid).map_err(nflat)?;

                let mut parts = GeneratorLossParts::default();
                if kind.needs_mse() {
                    parts.mse = Some(mse_loss(tape, gz, xid).map_err(flat)?);
                }
                if kind.needs_vgg() {
                    let fbound = fparams.bind(tape, LeafKind::Const);
                    parts.vgg = Some(perceptual_loss(tape, &fbound, &fspec, gz, xid).map_err(flat)?);
                }
                if kind.is_adversarial() {
                    let dbound = dparams.bind(tape, LeafKind::Const);
                    let scores = discriminator_forward(tape, &dbound, &dspec, gz).map_err(nflat)?;
                    let adv = if kind.uses_sigmoid_head() {
                        let p = tape.sigmoid(scores)?;
                        let dummy = tape.constant(Tensor::new(vec![2], vec![0.5, 0.5]));
                        let (_, g_loss, _) = gan_losses(tape, dummy, p).map_err(flat)?;
                        g_loss
                    } else {
                        let mean = tape.mean_all(scores)?;
                        tape.scalar_mul(-1.0, mean)?
                    };
                    parts.adversarial = Some(adv);
                }
                joint_generator_loss(tape, kind, parts, &weights).map_err(flat)
            },
            &g_point,
            1e-5,
            8,
            1000 + kind as u64,
        )
        .unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert!(report.max_rel_err < 1e-3, "{kind}: rel err {}", report.max_rel_err);
    }
}
