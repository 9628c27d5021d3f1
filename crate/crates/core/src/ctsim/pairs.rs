//! Aligned normal-dose / low-dose image pair generation.

use super::fbp::fbp_reconstruct;
use super::mu_to_hu;
use super::noise::{apply_dose_noise, NoiseReport};
use super::phantom::{render_phantom, Phantom};
use super::radon::{radon_forward_scaled, ScanProtocol};
use crate::autodiff::Tensor;

/// One simulated slice: reconstructions in Hounsfield units plus the
/// noise-stage quality counters.
#[derive(Debug, Clone)]
pub struct CtPair {
    /// Full-dose FBP reconstruction (HU).
    pub ndct: Tensor<f64>,
    /// Reduced-dose FBP reconstruction (HU).
    pub ldct: Tensor<f64>,
    pub ndct_noise: NoiseReport,
    pub ldct_noise: NoiseReport,
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 on (seed, stream); cheap independent stream derivation
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Render, project once, then reconstruct with independent noise draws:
/// the normal-dose pass at dose 1.0 and the low-dose pass at the protocol's
/// dose factor. Deterministic given the seed.
pub fn make_pair(phantom: &Phantom, protocol: &ScanProtocol, seed: u64) -> CtPair {
    let image_mu = render_phantom(phantom);
    let sino = radon_forward_scaled(&image_mu, protocol, phantom.pixel_size);

    let normal = ScanProtocol { dose_factor: 1.0, ..protocol.clone() };
    let low = protocol.clone();

    let (sino_nd, report_nd) = apply_dose_noise(&sino, &normal, mix_seed(seed, 1));
    let (sino_ld, report_ld) = apply_dose_noise(&sino, &low, mix_seed(seed, 2));

    let to_hu = |mu_img: Tensor<f64>| mu_img.map(|v| mu_to_hu(v, phantom.mu_water));
    CtPair {
        ndct: to_hu(fbp_reconstruct(&sino_nd)),
        ldct: to_hu(fbp_reconstruct(&sino_ld)),
        ndct_noise: report_nd,
        ldct_noise: report_ld,
    }
}
