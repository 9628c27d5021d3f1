//! Bias-corrected Adam updates over named parameter collections.

use crate::autodiff::{Scalar, Tensor};
use crate::error::TrainError;
use crate::nets::NetworkParams;

/// Per-parameter first/second moment estimates plus the shared step count.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
    t: u64,
    epsilon: f64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &NetworkParams<F>) -> Self {
        let zeros: Vec<Tensor<F>> =
            params.entries().iter().map(|(_, t)| Tensor::zeros(t.shape().to_vec())).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0, epsilon: 1e-8 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Moment tensors for checkpointing, named `m.<param>` / `v.<param>`.
    pub fn storage_entries(&self, params: &NetworkParams<F>) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::with_capacity(2 * self.m.len() + 1);
        for ((name, _), m) in params.entries().iter().zip(self.m.iter()) {
            out.push((format!("m.{name}"), m.cast::<f32>()));
        }
        for ((name, _), v) in params.entries().iter().zip(self.v.iter()) {
            out.push((format!("v.{name}"), v.cast::<f32>()));
        }
        out.push(("t".to_string(), Tensor::new(vec![1], vec![self.t as f32])));
        out
    }

    pub fn digest_input(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&self.t.to_le_bytes());
        for t in self.m.iter().chain(self.v.iter()) {
            for &x in t.data() {
                bytes.extend_from_slice(&x.to_f32().to_le_bytes());
            }
        }
        bytes
    }
}

/// One standard bias-corrected Adam update:
///
/// ```text
/// m <- b1 m + (1-b1) g        m-hat = m / (1 - b1^t)
/// v <- b2 v + (1-b2) g^2      v-hat = v / (1 - b2^t)
/// theta <- theta - alpha * m-hat / (sqrt(v-hat) + eps)
/// ```
///
/// Any non-finite gradient aborts the whole update (no parameter is touched)
/// and reports the offending parameter by name.
pub fn adam_step<F: Scalar>(
    params: &mut NetworkParams<F>,
    grads: &[Tensor<F>],
    state: &mut AdamState<F>,
    alpha: f64,
    beta1: f64,
    beta2: f64,
) -> Result<(), TrainError> {
    if grads.len() != params.entries().len() {
        return Err(TrainError::GradMismatch(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.entries().len()
        )));
    }
    for ((name, tensor), grad) in params.entries().iter().zip(grads.iter()) {
        if grad.shape() != tensor.shape() {
            return Err(TrainError::GradMismatch(format!(
                "'{name}': gradient shape {:?} vs parameter {:?}",
                grad.shape(),
                tensor.shape()
            )));
        }
        if !grad.all_finite() {
            return Err(TrainError::NonFiniteGrad(name.clone()));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let b1 = F::from_f64(beta1);
    let b2 = F::from_f64(beta2);
    let one = F::one();
    let corr1 = F::from_f64(1.0 - beta1.powi(t));
    let corr2 = F::from_f64(1.0 - beta2.powi(t));
    let lr = F::from_f64(alpha);
    let eps = F::from_f64(state.epsilon);

    for (idx, (_, tensor)) in params.entries_mut().iter_mut().enumerate() {
        let g = grads[idx].data();
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        let theta = tensor.data_mut();
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
