//! Parallel-beam forward projection by ray sampling with bilinear
//! interpolation.

use rayon::prelude::*;

use crate::autodiff::Tensor;

/// Acquisition settings for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanProtocol {
    /// Projection angles over [0, pi).
    pub n_views: usize,
    pub n_detectors: usize,
    /// Incident photons per ray at full dose.
    pub i0: f64,
    /// Additive Gaussian electronic noise, standard deviation in counts.
    pub electronic_sigma: f64,
    /// 1.0 = normal dose, 0.25 = quarter dose.
    pub dose_factor: f64,
}

impl ScanProtocol {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_views < 16 || self.n_detectors < 16 {
            return Err(format!(
                "n_views and n_detectors must be >= 16 (got {} / {})",
                self.n_views, self.n_detectors
            ));
        }
        if self.i0 * self.dose_factor < 1.0 {
            return Err(format!(
                "I0 * dose_factor must be >= 1 (got {} * {})",
                self.i0, self.dose_factor
            ));
        }
        if self.electronic_sigma < 0.0 {
            return Err("electronic_sigma must be >= 0".into());
        }
        Ok(())
    }
}

impl Default for ScanProtocol {
    fn default() -> Self {
        ScanProtocol {
            n_views: 180,
            n_detectors: 192,
            i0: 1.0e5,
            electronic_sigma: 8.0,
            dose_factor: 0.25,
        }
    }
}

/// Parallel-beam geometry descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub n_views: usize,
    pub n_detectors: usize,
    /// Detector pitch in cm.
    pub det_spacing: f64,
    /// Image side in pixels.
    pub grid: usize,
    /// Pixel size in cm.
    pub pixel_size: f64,
}

/// Line integrals (dimensionless, mu * cm) over views x detectors.
#[derive(Debug, Clone)]
pub struct Sinogram {
    pub values: Tensor<f64>,
    pub geometry: Geometry,
}

/// Bilinear sample of a centered image at physical coordinates; zero outside.
#[inline]
fn sample(image: &[f64], n: usize, pixel_size: f64, x: f64, y: f64) -> f64 {
    let half = (n as f64 - 1.0) / 2.0;
    let col = x / pixel_size + half;
    let row = half - y / pixel_size;
    if col < 0.0 || row < 0.0 {
        return 0.0;
    }
    let (c0, r0) = (col.floor(), row.floor());
    let (ci, ri) = (c0 as usize, r0 as usize);
    if ci + 1 >= n || ri + 1 >= n {
        return 0.0;
    }
    let (fc, fr) = (col - c0, row - r0);
    let v00 = image[ri * n + ci];
    let v01 = image[ri * n + ci + 1];
    let v10 = image[(ri + 1) * n + ci];
    let v11 = image[(ri + 1) * n + ci + 1];
    v00 * (1.0 - fr) * (1.0 - fc) + v01 * (1.0 - fr) * fc + v10 * fr * (1.0 - fc) + v11 * fr * fc
}

/// Forward projection: integral of the image along each ray. Linear in the
/// image by construction.
pub fn radon_forward(image: &Tensor<f64>, protocol: &ScanProtocol) -> Sinogram {
    let n = image.shape()[0];
    assert_eq!(image.shape(), &[n, n], "radon_forward expects a square image");
    let pixel_size = 1.0; // geometry below carries the physical scale
    radon_forward_scaled(image, protocol, pixel_size)
}

/// Forward projection with an explicit pixel size in cm.
pub fn radon_forward_scaled(image: &Tensor<f64>, protocol: &ScanProtocol, pixel_size: f64) -> Sinogram {
    let n = image.shape()[0];
    assert_eq!(image.shape(), &[n, n], "radon_forward expects a square image");
    let fov = n as f64 * pixel_size;
    let det_spacing = fov / protocol.n_detectors as f64;
    let step = pixel_size * 0.5;
    let half_len = fov * std::f64::consts::SQRT_2 / 2.0;
    let n_steps = (2.0 * half_len / step).ceil() as usize;
    let data = image.data();

    let mut values = vec![0.0f64; protocol.n_views * protocol.n_detectors];
    values
        .par_chunks_mut(protocol.n_detectors)
        .enumerate()
        .for_each(|(v, row)| {
            let theta = v as f64 * std::f64::consts::PI / protocol.n_views as f64;
            let (nx, ny) = (theta.cos(), theta.sin());
            let (dx, dy) = (-theta.sin(), theta.cos());
            for (k, slot) in row.iter_mut().enumerate() {
                let t = (k as f64 - (protocol.n_detectors as f64 - 1.0) / 2.0) * det_spacing;
                let mut acc = 0.0;
                for s_idx in 0..n_steps {
                    let s = -half_len + (s_idx as f64 + 0.5) * step;
                    let x = t * nx + s * dx;
                    let y = t * ny + s * dy;
                    acc += sample(data, n, pixel_size, x, y);
                }
                *slot = acc * step;
            }
        });

    Sinogram {
        values: Tensor::new(vec![protocol.n_views, protocol.n_detectors], values),
        geometry: Geometry {
            n_views: protocol.n_views,
            n_detectors: protocol.n_detectors,
            det_spacing,
            grid: n,
            pixel_size,
        },
    }
}
