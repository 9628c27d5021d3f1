use super::gradcheck::{check_gradients, rel_err};
use super::tape::{LeafKind, NodeId, Tape};
use super::tensor::Tensor;
use crate::error::TapeError;

fn t64(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape, data)
}

/// Deterministic pseudo-random fill in (-1, 1).
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
fn relu_definition() {
    let mut tape = Tape::new();
    let x = tape.constant(t64(vec![3], vec![-1.0, 0.0, 2.0]));
    let y = tape.relu(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn conv2d_identity_kernel_preserves_image() {
    let img = pseudo_random(vec![1, 1, 6, 6], 7);
    let mut kernel = vec![0.0; 9];
    kernel[4] = 1.0; // center tap
    let mut tape = Tape::new();
    let x = tape.constant(img.clone());
    let w = tape.constant(t64(vec![1, 1, 3, 3], kernel));
    let y = tape.conv2d(x, w, 1, 1).unwrap();
    assert_eq!(tape.value(y).shape(), img.shape());
    for (a, b) in tape.value(y).data().iter().zip(img.data()) {
        assert_eq!(a, b);
    }
}

#[test]
fn frobenius_sq_of_2x2() {
    let mut tape = Tape::new();
    let x = tape.constant(t64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    let y = tape.frobenius_sq(x).unwrap();
    assert_eq!(tape.value(y).scalar_value(), 30.0);
}

#[test]
fn derivative_of_square_at_three() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0f64), LeafKind::Param);
    let y = tape.square(x).unwrap();
    let grads = tape.backward(y, &[x]).unwrap();
    assert_eq!(grads[&x].scalar_value(), 6.0);
}

#[test]
fn second_derivative_of_cube_at_two() {
    // d/dx of (d/dx x^3) at x=2 is 6x = 12.
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(2.0f64), LeafKind::Param);
    let x2 = tape.square(x).unwrap();
    let y = tape.mul(x2, x).unwrap();
    let y = tape.sum_all(y).unwrap();
    let first = tape.backward_graph(y, &[x]).unwrap()[&x];
    let first_scalar = tape.sum_all(first).unwrap();
    assert!((tape.value(first_scalar).scalar_value() - 12.0).abs() < 1e-12); // 3x^2
    let second = tape.backward(first_scalar, &[x]).unwrap();
    assert!((second[&x].scalar_value() - 12.0).abs() < 1e-12);
}

#[test]
fn norm_of_scaled_vector_matches_finite_differences() {
    // f(a) = ||a * x||_2 for fixed x; d/da = sign(a) ||x||.
    let x = pseudo_random(vec![5], 11);
    let x_for_norm = x.clone();
    let report = check_gradients(
        move |tape: &mut Tape<f64>, leaves: &[NodeId]| {
            let xc = tape.constant(x.clone());
            let a_full = tape.unary_broadcast(leaves[0], vec![5])?;
            let ax = tape.mul(a_full, xc)?;
            let sq = tape.square(ax)?;
            let s = tape.sum_all(sq)?;
            tape.sqrt(s)
        },
        &[Tensor::scalar(0.7f64)],
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);

    // Cross-check the analytic value itself.
    let norm_x: f64 = x_for_norm.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::scalar(0.7f64), LeafKind::Param);
    let xc = tape.constant(x_for_norm);
    let a_full = tape.unary_broadcast(a, vec![5]).unwrap();
    let ax = tape.mul(a_full, xc).unwrap();
    let sq = tape.square(ax).unwrap();
    let s = tape.sum_all(sq).unwrap();
    let f = tape.sqrt(s).unwrap();
    let g = tape.backward(f, &[a]).unwrap();
    assert!(rel_err(g[&a].scalar_value(), norm_x) < 1e-12);
}

#[test]
fn check_gradients_sum_of_squares() {
    let point = pseudo_random(vec![3, 3], 3);
    let report = check_gradients(
        |tape: &mut Tape<f64>, leaves: &[NodeId]| {
            let sq = tape.square(leaves[0])?;
            tape.sum_all(sq)
        },
        &[point],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-7, "rel err {}", report.max_rel_err);
}

#[test]
fn check_gradients_conv_relu_mean_chain() {
    let x = pseudo_random(vec![2, 1, 5, 5], 21);
    let w = pseudo_random(vec![2, 1, 3, 3], 22);
    let report = check_gradients(
        |tape: &mut Tape<f64>, leaves: &[NodeId]| {
            let y = tape.conv2d(leaves[0], leaves[1], 1, 1)?;
            let r = tape.relu(y)?;
            tape.mean_all(r)
        },
        &[x, w],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
}

#[test]
fn check_gradients_constant_function_is_exactly_zero() {
    let report = check_gradients(
        |tape: &mut Tape<f64>, leaves: &[NodeId]| {
            let c = tape.constant(Tensor::scalar(4.0));
            // depend on the leaf with coefficient zero
            let z = tape.scalar_mul(0.0, leaves[0])?;
            let zs = tape.sum_all(z)?;
            tape.add(c, zs)
        },
        &[pseudo_random(vec![4], 5)],
        1e-5,
    )
    .unwrap();
    assert_eq!(report.max_rel_err, 0.0);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.leaf(t64(vec![3], vec![-1.0, 0.0, 1.0]), LeafKind::Param);
    let y = tape.relu(x).unwrap();
    let s = tape.sum_all(y).unwrap();
    let g = tape.backward(s, &[x]).unwrap();
    assert_eq!(g[&x].data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn forward_determinism_bit_identical() {
    let run = || {
        let mut tape = Tape::new();
        let x = tape.constant(pseudo_random(vec![2, 1, 8, 8], 33));
        let w = tape.constant(pseudo_random(vec![4, 1, 3, 3], 34));
        let y = tape.conv2d(x, w, 2, 1).unwrap();
        let r = tape.leaky_relu(0.2, y).unwrap();
        let m = tape.mean_all(r).unwrap();
        tape.value(m).scalar_value().to_bits()
    };
    assert_eq!(run(), run());
}

/// Every differentiable primitive matches central finite differences.
#[test]
fn primitive_gradients_match_finite_differences() {
    type Builder = fn(&mut Tape<f64>, &[NodeId]) -> Result<NodeId, TapeError>;
    // Positive-valued points for sqrt/ln/recip; generic for the rest.
    let generic = |seed: u64| pseudo_random(vec![2, 3], seed);
    let positive = |seed: u64| pseudo_random(vec![2, 3], seed).map(|v| v.abs() + 0.5);

    let cases: Vec<(&str, Builder, Vec<Tensor<f64>>, f64)> = vec![
        (
            "add",
            |t, l| {
                let y = t.add(l[0], l[1])?;
                t.sum_all(y)
            },
            vec![generic(1), generic(2)],
            1e-7,
        ),
        (
            "sub",
            |t, l| {
                let y = t.sub(l[0], l[1])?;
                t.frobenius_sq(y)
            },
            vec![generic(3), generic(4)],
            1e-6,
        ),
        (
            "mul",
            |t, l| {
                let y = t.mul(l[0], l[1])?;
                t.sum_all(y)
            },
            vec![generic(5), generic(6)],
            1e-6,
        ),
        (
            "scalar_mul+add_scalar",
            |t, l| {
                let y = t.scalar_mul(1.7, l[0])?;
                let y = t.add_scalar(-0.3, y)?;
                t.frobenius_sq(y)
            },
            vec![generic(7)],
            1e-6,
        ),
        (
            "square",
            |t, l| {
                let y = t.square(l[0])?;
                t.sum_all(y)
            },
            vec![generic(8)],
            1e-6,
        ),
        (
            "sqrt",
            |t, l| {
                let y = t.sqrt(l[0])?;
                t.sum_all(y)
            },
            vec![positive(9)],
            1e-6,
        ),
        (
            "recip",
            |t, l| {
                let y = t.recip(l[0])?;
                t.sum_all(y)
            },
            vec![positive(10)],
            1e-6,
        ),
        (
            "ln",
            |t, l| {
                let y = t.ln(l[0])?;
                t.sum_all(y)
            },
            vec![positive(11)],
            1e-6,
        ),
        (
            "sigmoid",
            |t, l| {
                let y = t.sigmoid(l[0])?;
                t.frobenius_sq(y)
            },
            vec![generic(12)],
            1e-6,
        ),
        (
            "leaky_relu",
            |t, l| {
                let y = t.leaky_relu(0.2, l[0])?;
                t.sum_all(y)
            },
            vec![generic(13)],
            1e-6,
        ),
        (
            "clamp",
            |t, l| {
                let y = t.clamp(-0.5, 0.5, l[0])?;
                t.frobenius_sq(y)
            },
            vec![generic(14)],
            1e-5,
        ),
        (
            "matmul",
            |t, l| {
                let y = t.matmul(l[0], l[1])?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![3, 4], 15), pseudo_random(vec![4, 2], 16)],
            1e-6,
        ),
        (
            "matmul_ta",
            |t, l| {
                let y = t.matmul_t(true, false, l[0], l[1])?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![4, 3], 17), pseudo_random(vec![4, 2], 18)],
            1e-6,
        ),
        (
            "matmul_tb",
            |t, l| {
                let y = t.matmul_t(false, true, l[0], l[1])?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![3, 4], 19), pseudo_random(vec![2, 4], 20)],
            1e-6,
        ),
        (
            "matmul_ta_tb",
            |t, l| {
                let y = t.matmul_t(true, true, l[0], l[1])?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![4, 3], 21), pseudo_random(vec![2, 4], 22)],
            1e-6,
        ),
        (
            "conv2d_stride1",
            |t, l| {
                let y = t.conv2d(l[0], l[1], 1, 1)?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![2, 2, 5, 5], 23), pseudo_random(vec![3, 2, 3, 3], 24)],
            1e-5,
        ),
        (
            "conv2d_stride2",
            |t, l| {
                let y = t.conv2d(l[0], l[1], 2, 1)?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![1, 2, 6, 6], 25), pseudo_random(vec![2, 2, 3, 3], 26)],
            1e-5,
        ),
        (
            "bias_add_4d",
            |t, l| {
                let y = t.bias_add(l[0], l[1])?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![2, 3, 2, 2], 27), pseudo_random(vec![3], 28)],
            1e-6,
        ),
        (
            "bias_add_2d",
            |t, l| {
                let y = t.bias_add(l[0], l[1])?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![3, 4], 29), pseudo_random(vec![4], 30)],
            1e-6,
        ),
        (
            "mean",
            |t, l| t.mean_all(l[0]),
            vec![generic(31)],
            1e-7,
        ),
        (
            "sum_per_sample",
            |t, l| {
                let y = t.sum_per_sample(l[0])?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![3, 4], 32)],
            1e-6,
        ),
        (
            "pad_crop",
            |t, l| {
                let y = t.pad2d(l[0], 2)?;
                let z = t.crop2d(y, 1)?;
                t.frobenius_sq(z)
            },
            vec![pseudo_random(vec![1, 1, 4, 4], 33)],
            1e-6,
        ),
        (
            "flatten",
            |t, l| {
                let y = t.flatten(l[0])?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![2, 2, 3, 3], 34)],
            1e-6,
        ),
        (
            "repeat_channels",
            |t, l| {
                let y = t.repeat_channels(l[0], 3)?;
                t.frobenius_sq(y)
            },
            vec![pseudo_random(vec![2, 1, 3, 3], 35)],
            1e-6,
        ),
    ];

    for (name, builder, point, tol) in cases {
        let report = check_gradients(builder, &point, 1e-5)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(
            report.max_rel_err < tol.max(1e-4_f64.min(1.0)),
            "{name}: rel err {} exceeds {tol}",
            report.max_rel_err
        );
        assert!(report.max_rel_err < 1e-4, "{name}: above engine-wide 1e-4 bound");
    }
}

/// Double backward of a twice-differentiable chain matches finite
/// differences of the first gradient.
#[test]
fn double_backward_matches_finite_differences() {
    // phi(x) = sum(sigmoid(x)^2); psi(x) = ||d phi/d x||^2 checked by FD.
    let point = pseudo_random(vec![4], 40);

    let grad_of_phi = |x: &Tensor<f64>| -> Tensor<f64> {
        let mut tape = Tape::new();
        let l = tape.leaf(x.clone(), LeafKind::Param);
        let s = tape.sigmoid(l).unwrap();
        let q = tape.square(s).unwrap();
        let out = tape.sum_all(q).unwrap();
        tape.backward(out, &[l]).unwrap().remove(&l).unwrap()
    };

    // Analytic-by-tape: psi = sum(g(x)^2) built via backward_graph.
    let psi_and_grad = |x: &Tensor<f64>| -> (f64, Tensor<f64>) {
        let mut tape = Tape::new();
        let l = tape.leaf(x.clone(), LeafKind::Param);
        let s = tape.sigmoid(l).unwrap();
        let q = tape.square(s).unwrap();
        let out = tape.sum_all(q).unwrap();
        let g = tape.backward_graph(out, &[l]).unwrap()[&l];
        let gsq = tape.frobenius_sq(g).unwrap();
        let psi = tape.value(gsq).scalar_value();
        let dpsi = tape.backward(gsq, &[l]).unwrap().remove(&l).unwrap();
        (psi, dpsi)
    };

    let (_, dpsi) = psi_and_grad(&point);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for ci in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[ci] += step;
        let mut minus = point.clone();
        minus.data_mut()[ci] -= step;
        let fplus: f64 = grad_of_phi(&plus).data().iter().map(|v| v * v).sum();
        let fminus: f64 = grad_of_phi(&minus).data().iter().map(|v| v * v).sum();
        let fd = (fplus - fminus) / (2.0 * step);
        worst = worst.max(rel_err(dpsi.data()[ci], fd));
    }
    assert!(worst < 1e-3, "double-backward rel err {worst}");
}

#[test]
fn backward_rejects_non_scalar_output() {
    let mut tape = Tape::new();
    let x = tape.leaf(pseudo_random(vec![2, 2], 50), LeafKind::Param);
    let y = tape.square(x).unwrap();
    match tape.backward(y, &[x]) {
        Err(TapeError::NonScalarOutput(shape)) => assert_eq!(shape, vec![2, 2]),
        other => panic!("expected NonScalarOutput, got {other:?}"),
    }
}

#[test]
fn backward_rejects_unknown_node() {
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.leaf(Tensor::scalar(1.0), LeafKind::Param);
    assert!(matches!(tape.backward(999, &[x]), Err(TapeError::UnknownNode(999))));
}

#[test]
fn shape_mismatch_names_offending_dims() {
    let mut tape = Tape::new();
    let a = tape.constant(pseudo_random(vec![2, 3], 60));
    let b = tape.constant(pseudo_random(vec![3, 2], 61));
    let err = tape.add(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "message: {msg}");
}

#[test]
fn inference_tape_rejects_backward_graph() {
    let mut tape = Tape::new_inference();
    let x = tape.leaf(Tensor::scalar(2.0f64), LeafKind::Param);
    let y = tape.square(x).unwrap();
    assert!(tape.backward_graph(y, &[x]).is_err());
}

#[test]
fn value_backward_leaves_tape_length_unchanged() {
    let mut tape = Tape::new();
    let x = tape.leaf(pseudo_random(vec![3], 70), LeafKind::Param);
    let y = tape.square(x).unwrap();
    let s = tape.sum_all(y).unwrap();
    let before = tape.len();
    let _ = tape.backward(s, &[x]).unwrap();
    assert_eq!(tape.len(), before);
}
