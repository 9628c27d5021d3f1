//! Finite-difference verification harness for the tape engine.

use super::scalar::Scalar;
use super::tape::{LeafKind, NodeId, Tape};
use super::tensor::Tensor;
use crate::error::TapeError;

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error over all checked components.
    pub max_rel_err: f64,
    /// (leaf index, component index) of the worst error.
    pub worst: (usize, usize),
    /// Number of components compared.
    pub checked: usize,
}

/// Relative error with an absolute floor so exact zeros compare as zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-12 {
        (a - b).abs()
    } else {
        (a - b).abs() / denom
    }
}

/// Compare `backward()` output against central finite differences,
/// component by component, and report the worst relative error.
///
/// `f` must build a scalar output from the given leaves. Components can be
/// restricted per leaf via `component_filter` (None checks everything).
pub fn check_gradients_filtered<F, B>(
    mut f: B,
    point: &[Tensor<F>],
    step: f64,
    component_filter: Option<&[Vec<usize>]>,
) -> Result<GradCheckReport, TapeError>
where
    F: Scalar,
    B: FnMut(&mut Tape<F>, &[NodeId]) -> Result<NodeId, TapeError>,
{
    assert!(step > 0.0, "finite-difference step must be > 0");
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> = point.iter().map(|t| tape.leaf(t.clone(), LeafKind::Param)).collect();
    let out = f(&mut tape, &leaves)?;
    if !tape.value(out).is_scalar() {
        return Err(TapeError::NonScalarOutput(tape.shape(out).to_vec()));
    }
    let grads = tape.backward(out, &leaves)?;

    let mut eval = |point: &[Tensor<F>]| -> Result<f64, TapeError> {
        let mut t = Tape::new();
        let ids: Vec<NodeId> = point.iter().map(|p| t.leaf(p.clone(), LeafKind::Const)).collect();
        let o = f(&mut t, &ids)?;
        Ok(t.value(o).scalar_value().to_f64())
    };

    let mut report = GradCheckReport { max_rel_err: 0.0, worst: (0, 0), checked: 0 };
    let mut perturbed: Vec<Tensor<F>> = point.to_vec();
    for (li, leaf_id) in leaves.iter().enumerate() {
        let analytic = &grads[leaf_id];
        let all: Vec<usize>;
        let components: &[usize] = match component_filter {
            Some(filter) => &filter[li],
            None => {
                all = (0..point[li].numel()).collect();
                &all
            }
        };
        for &ci in components {
            let base = point[li].data()[ci].to_f64();
            let h = F::from_f64(step);
            perturbed[li].data_mut()[ci] = F::from_f64(base) + h;
            let plus = eval(&perturbed)?;
            perturbed[li].data_mut()[ci] = F::from_f64(base) - h;
            let minus = eval(&perturbed)?;
            perturbed[li].data_mut()[ci] = F::from_f64(base);

            let fd = (plus - minus) / (2.0 * step);
            let ad = analytic.data()[ci].to_f64();
            if !fd.is_finite() || !ad.is_finite() {
                return Err(TapeError::NonFinite {
                    context: format!("gradient check of leaf {li}"),
                    index: ci,
                });
            }
            let err = rel_err(ad, fd);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (li, ci);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Check every component of every leaf.
pub fn check_gradients<F, B>(f: B, point: &[Tensor<F>], step: f64) -> Result<GradCheckReport, TapeError>
where
    F: Scalar,
    B: FnMut(&mut Tape<F>, &[NodeId]) -> Result<NodeId, TapeError>,
{
    check_gradients_filtered(f, point, step, None)
}

/// Check a deterministic pseudo-random subset of components per leaf;
/// intended for full-size networks where exhaustive sweeps are too slow.
pub fn check_gradients_sampled<F, B>(
    f: B,
    point: &[Tensor<F>],
    step: f64,
    per_leaf: usize,
    seed: u64,
) -> Result<GradCheckReport, TapeError>
where
    F: Scalar,
    B: FnMut(&mut Tape<F>, &[NodeId]) -> Result<NodeId, TapeError>,
{
    // splitmix64 stream; avoids dragging an RNG dependency into the engine.
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let filter: Vec<Vec<usize>> = point
        .iter()
        .map(|t| {
            let n = t.numel();
            if n <= per_leaf {
                (0..n).collect()
            } else {
                let mut picked: Vec<usize> = (0..per_leaf).map(|_| (next() % n as u64) as usize).collect();
                picked.sort_unstable();
                picked.dedup();
                picked
            }
        })
        .collect();
    check_gradients_filtered(f, point, step, Some(&filter))
}
