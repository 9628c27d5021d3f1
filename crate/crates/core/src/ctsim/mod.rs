//! Synthetic CT pipeline: phantom rendering, parallel-beam projection,
//! dose-dependent noise injection, filtered back-projection, and aligned
//! normal-dose / low-dose pair generation.
//!
//! All simulation math runs in f64; corpus extraction converts to the
//! training precision downstream.

mod fbp;
mod noise;
mod pairs;
mod phantom;
mod radon;

pub use fbp::fbp_reconstruct;
pub use noise::{apply_dose_noise, NoiseReport};
pub use pairs::{make_pair, CtPair};
pub use phantom::{default_phantom_suite, render_phantom, render_phantom_hu, Ellipse, Lesion, Phantom};
pub use radon::{radon_forward, radon_forward_scaled, Geometry, ScanProtocol, Sinogram};

/// Attenuation (1/cm) to Hounsfield units.
pub fn mu_to_hu(mu: f64, mu_water: f64) -> f64 {
    1000.0 * (mu - mu_water) / mu_water
}

/// Hounsfield units to attenuation (1/cm).
pub fn hu_to_mu(hu: f64, mu_water: f64) -> f64 {
    mu_water * (1.0 + hu / 1000.0)
}
