//! Dose-dependent measurement noise: Poisson photon statistics plus
//! additive Gaussian electronic noise, applied in the count domain.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::radon::{ScanProtocol, Sinogram};
use crate::autodiff::Tensor;

/// Per-sinogram data-quality counters from the noise stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoiseReport {
    /// Rays whose noisy counts were clamped up to 1 (photon starvation).
    pub clamped_rays: usize,
    pub total_rays: usize,
}

/// Per ray: counts = Poisson(I0 * dose * exp(-p)) + N(0, sigma_e), clamped
/// to >= 1, then p-hat = -ln(counts / (I0 * dose)). Deterministic given the
/// seed: rays are processed in row-major order from one ChaCha20 stream.
pub fn apply_dose_noise(sino: &Sinogram, protocol: &ScanProtocol, seed: u64) -> (Sinogram, NoiseReport) {
    protocol.validate().expect("invalid scan protocol");
    let flux = protocol.i0 * protocol.dose_factor;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gaussian = if protocol.electronic_sigma > 0.0 {
        Some(Normal::new(0.0, protocol.electronic_sigma).unwrap())
    } else {
        None
    };
    let mut report = NoiseReport { clamped_rays: 0, total_rays: sino.values.numel() };
    let noisy: Vec<f64> = sino
        .values
        .data()
        .iter()
        .map(|&p| {
            let lambda = flux * (-p).exp();
            let quanta = if lambda > 0.0 {
                Poisson::new(lambda).expect("lambda > 0").sample(&mut rng)
            } else {
                0.0
            };
            let electronic = gaussian.as_ref().map_or(0.0, |g| g.sample(&mut rng));
            let mut counts = quanta + electronic;
            if counts < 1.0 {
                counts = 1.0;
                report.clamped_rays += 1;
            }
            (flux / counts).ln()
        })
        .collect();
    (
        Sinogram {
            values: Tensor::new(sino.values.shape().to_vec(), noisy),
            geometry: sino.geometry.clone(),
        },
        report,
    )
}
