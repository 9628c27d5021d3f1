//! Deterministic parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::NetworkParams;
use crate::autodiff::{Scalar, Tensor};

/// Zero-mean normal weights scaled by sqrt(2 / fan_in); biases zero.
///
/// Draws happen in f64 from a ChaCha20 stream seeded by `seed`, in the
/// declared entry order, so the same (spec, seed) always produces the same
/// parameters in either precision.
pub fn init_params<F: Scalar>(
    tag: &str,
    shapes: &[(String, Vec<usize>)],
    seed: u64,
) -> NetworkParams<F> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let entries = shapes
        .iter()
        .map(|(name, shape)| {
            let tensor = match shape.len() {
                1 => Tensor::zeros(shape.clone()),
                2 | 4 => {
                    // fan-in: input features of an FC [in, out] weight, or
                    // in_channels * kernel area of a conv kernel.
                    let fan_in: usize = if shape.len() == 2 {
                        shape[0]
                    } else {
                        shape[1] * shape[2] * shape[3]
                    };
                    let std = (2.0 / fan_in as f64).sqrt();
                    let numel: usize = shape.iter().product();
                    let data: Vec<F> = (0..numel)
                        .map(|_| {
                            let z: f64 = normal.sample(&mut rng);
                            F::from_f64(z * std)
                        })
                        .collect();
                    Tensor::new(shape.clone(), data)
                }
                other => panic!("init_params: unsupported rank {other} for '{name}'"),
            };
            (name.clone(), tensor)
        })
        .collect();
    NetworkParams::new(tag, entries)
}
