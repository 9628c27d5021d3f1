//! Image quality metrics: PSNR, Gaussian-windowed SSIM, flat-ROI
//! statistics, and per-method comparison tables.

use crate::autodiff::Tensor;
use crate::error::MetricError;

/// Rectangular region of interest in image coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiSpec {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
    pub label: String,
}

impl RoiSpec {
    pub fn new(row: usize, col: usize, height: usize, width: usize, label: impl Into<String>) -> Self {
        RoiSpec { row, col, height, width, label: label.into() }
    }

    fn check(&self, shape: &[usize]) -> Result<(), MetricError> {
        let (h, w) = (shape[0], shape[1]);
        if self.row + self.height > h || self.col + self.width > w || self.height == 0 || self.width == 0
        {
            return Err(MetricError::RoiOutside {
                label: self.label.clone(),
                row: self.row,
                col: self.col,
                height: self.height,
                width: self.width,
                h,
                w,
            });
        }
        Ok(())
    }
}

/// PSNR in dB, capped at 99.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    pub db: f64,
    /// True when the images were bit-identical (zero MSE).
    pub identical: bool,
}

pub const PSNR_CAP_DB: f64 = 99.0;

fn check_same_shape(a: &Tensor<f64>, b: &Tensor<f64>, method: &str) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::Shape {
            expected: b.shape().to_vec(),
            got: a.shape().to_vec(),
            method: if method.is_empty() { String::new() } else { format!(" (method '{method}')") },
        });
    }
    Ok(())
}

/// 10 log10(peak^2 / MSE); identical images report the 99 dB cap with a flag.
pub fn psnr(candidate: &Tensor<f64>, reference: &Tensor<f64>, peak: f64) -> Result<Psnr, MetricError> {
    check_same_shape(candidate, reference, "")?;
    assert!(peak > 0.0, "psnr peak must be > 0");
    let n = candidate.numel() as f64;
    let mse: f64 = candidate
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(Psnr { db: PSNR_CAP_DB, identical: true });
    }
    let db = 10.0 * (peak * peak / mse).log10();
    Ok(Psnr { db: db.min(PSNR_CAP_DB), identical: false })
}

/// Mean local SSIM with a Gaussian window (default 11 taps, sigma 1.5) over
/// valid window positions; constants k1/k2 follow the conventional defaults.
pub fn ssim(
    candidate: &Tensor<f64>,
    reference: &Tensor<f64>,
    window: usize,
    k1: f64,
    k2: f64,
    peak: f64,
) -> Result<f64, MetricError> {
    check_same_shape(candidate, reference, "")?;
    assert!(window % 2 == 1, "ssim window must be odd");
    let (h, w) = (candidate.shape()[0], candidate.shape()[1]);
    if h < window || w < window {
        return Err(MetricError::TooSmall { h, w, window });
    }
    let weights = gaussian_kernel(window, 1.5);

    // separable weighted filtering of the five moment images
    let filter = |img: &[f64]| -> Vec<f64> { separable_filter(img, h, w, &weights) };
    let a = candidate.data();
    let b = reference.data();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();

    let mu_a = filter(a);
    let mu_b = filter(b);
    let m_aa = filter(&aa);
    let m_bb = filter(&bb);
    let m_ab = filter(&ab);

    let c1 = (k1 * peak) * (k1 * peak);
    let c2 = (k2 * peak) * (k2 * peak);
    let out_h = h - window + 1;
    let out_w = w - window + 1;
    let mut acc = 0.0;
    for i in 0..out_h {
        for j in 0..out_w {
            let idx = i * out_w + j;
            let (ma, mb) = (mu_a[idx], mu_b[idx]);
            let va = m_aa[idx] - ma * ma;
            let vb = m_bb[idx] - mb * mb;
            let cov = m_ab[idx] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            acc += num / den;
        }
    }
    Ok(acc / (out_h * out_w) as f64)
}

/// SSIM with the conventional defaults (11-tap window, k1 = 0.01, k2 = 0.03).
pub fn ssim_default(candidate: &Tensor<f64>, reference: &Tensor<f64>, peak: f64) -> Result<f64, MetricError> {
    ssim(candidate, reference, 11, 0.01, 0.03, peak)
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let mut k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Valid-mode separable correlation with a symmetric 1-d kernel.
fn separable_filter(img: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let window = kernel.len();
    let out_w = w - window + 1;
    // horizontal pass
    let mut tmp = vec![0.0f64; h * out_w];
    for i in 0..h {
        for j in 0..out_w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * img[i * w + j + k];
            }
            tmp[i * out_w + j] = acc;
        }
    }
    // vertical pass
    let out_h = h - window + 1;
    let mut out = vec![0.0f64; out_h * out_w];
    for i in 0..out_h {
        for j in 0..out_w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(i + k) * out_w + j];
            }
            out[i * out_w + j] = acc;
        }
    }
    out
}

/// Sample mean and sample standard deviation (n-1 denominator) of a ROI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiStats {
    pub mean: f64,
    pub sd: f64,
    /// Single-pixel ROI: the SD is reported as 0 by convention.
    pub degenerate: bool,
}

pub fn roi_stats(image: &Tensor<f64>, roi: &RoiSpec) -> Result<RoiStats, MetricError> {
    roi.check(image.shape())?;
    let w = image.shape()[1];
    let n = (roi.height * roi.width) as f64;
    let mut sum = 0.0;
    for i in roi.row..roi.row + roi.height {
        for j in roi.col..roi.col + roi.width {
            sum += image.data()[i * w + j];
        }
    }
    let mean = sum / n;
    if n < 1.5 {
        return Ok(RoiStats { mean, sd: 0.0, degenerate: true });
    }
    let mut sq = 0.0;
    for i in roi.row..roi.row + roi.height {
        for j in roi.col..roi.col + roi.width {
            let d = image.data()[i * w + j] - mean;
            sq += d * d;
        }
    }
    Ok(RoiStats { mean, sd: (sq / (n - 1.0)).sqrt(), degenerate: false })
}

/// One comparison row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub psnr_db: f64,
    pub psnr_identical: bool,
    pub ssim: f64,
    pub rois: Vec<RoiStats>,
}

/// Per-method quantitative comparison against a shared reference.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub roi_labels: Vec<String>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut header = String::from("method,psnr,ssim");
        for (i, _) in self.roi_labels.iter().enumerate() {
            header.push_str(&format!(",roi{n}_mean,roi{n}_sd", n = i + 1));
        }
        let mut out = header + "\n";
        for row in &self.rows {
            out.push_str(&format!("{},{:.6},{:.6}", row.method, row.psnr_db, row.ssim));
            for r in &row.rois {
                out.push_str(&format!(",{:.4},{:.4}", r.mean, r.sd));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:>8} {:>7}", "method", "psnr", "ssim");
        for label in &self.roi_labels {
            out.push_str(&format!(" {:>10} {:>8}", format!("{label} mean"), "sd"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<12} {:>8.3} {:>7.4}", row.method, row.psnr_db, row.ssim));
            for r in &row.rois {
                out.push_str(&format!(" {:>10.1} {:>8.1}", r.mean, r.sd));
            }
            out.push('\n');
        }
        out
    }

    pub fn row(&self, method: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Evaluate every method image against the normal-dose reference, with the
/// low-dose image as the baseline row.
pub fn evaluate_methods(
    methods: &[(String, Tensor<f64>)],
    reference: &Tensor<f64>,
    ldct: &Tensor<f64>,
    rois: &[RoiSpec],
    peak: f64,
) -> Result<EvalReport, MetricError> {
    check_same_shape(ldct, reference, "ldct")?;
    let mut rows = Vec::with_capacity(methods.len() + 1);
    let mut eval_one = |name: &str, img: &Tensor<f64>| -> Result<EvalRow, MetricError> {
        check_same_shape(img, reference, name)?;
        let p = psnr(img, reference, peak)?;
        let s = ssim_default(img, reference, peak)?;
        let rois = rois.iter().map(|r| roi_stats(img, r)).collect::<Result<Vec<_>, _>>()?;
        Ok(EvalRow { method: name.to_string(), psnr_db: p.db, psnr_identical: p.identical, ssim: s, rois })
    };
    rows.push(eval_one("ldct", ldct)?);
    for (name, img) in methods {
        rows.push(eval_one(name, img)?);
    }
    Ok(EvalReport { roi_labels: rois.iter().map(|r| r.label.clone()).collect(), rows })
}

#[cfg(test)]
#[path = "metrics_tests.rs"]
mod tests;
