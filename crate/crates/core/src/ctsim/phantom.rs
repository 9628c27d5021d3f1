//! Analytic phantoms: rotated ellipses plus low-contrast disc lesions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::mu_to_hu;
use crate::autodiff::Tensor;

/// Rotated ellipse contributing `mu` (1/cm) inside its boundary.
#[derive(Debug, Clone)]
pub struct Ellipse {
    /// Center in cm, image-centered coordinates (x right, y up).
    pub cx: f64,
    pub cy: f64,
    /// Semi-axes in cm.
    pub a: f64,
    pub b: f64,
    /// Rotation in radians.
    pub theta: f64,
    /// Additive attenuation inside, 1/cm.
    pub mu: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Low-contrast disc lesion adding `dmu` (may be negative) inside radius `r`.
#[derive(Debug, Clone)]
pub struct Lesion {
    pub cx: f64,
    pub cy: f64,
    /// Radius in cm.
    pub r: f64,
    /// Additive attenuation delta, 1/cm.
    pub dmu: f64,
}

impl Lesion {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        dx * dx + dy * dy <= self.r * self.r
    }
}

/// Slice phantom: summed ellipse and lesion attenuations on a square grid.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub ellipses: Vec<Ellipse>,
    pub lesions: Vec<Lesion>,
    /// Side length in pixels.
    pub grid: usize,
    /// Pixel size in cm.
    pub pixel_size: f64,
    /// Water attenuation used for the HU scale, 1/cm.
    pub mu_water: f64,
}

impl Phantom {
    /// Physical coordinates of a pixel center (x right, y up, origin at the
    /// image center).
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let half = (self.grid as f64 - 1.0) / 2.0;
        let x = (col as f64 - half) * self.pixel_size;
        let y = (half - row as f64) * self.pixel_size;
        (x, y)
    }

    fn mu_at(&self, x: f64, y: f64) -> f64 {
        let mut mu = 0.0;
        for e in &self.ellipses {
            if e.contains(x, y) {
                mu += e.mu;
            }
        }
        for l in &self.lesions {
            if l.contains(x, y) {
                mu += l.dmu;
            }
        }
        mu
    }
}

/// Pixel value = sum of component attenuations covering the pixel center.
pub fn render_phantom(phantom: &Phantom) -> Tensor<f64> {
    let n = phantom.grid;
    let mut data = vec![0.0f64; n * n];
    for row in 0..n {
        for col in 0..n {
            let (x, y) = phantom.pixel_center(row, col);
            data[row * n + col] = phantom.mu_at(x, y);
        }
    }
    Tensor::new(vec![n, n], data)
}

/// Render directly in Hounsfield units (noise-free reference image).
pub fn render_phantom_hu(phantom: &Phantom) -> Tensor<f64> {
    let mu = render_phantom(phantom);
    mu.map(|v| mu_to_hu(v, phantom.mu_water))
}

/// Randomized abdomen-like slices: a soft-tissue body ellipse, a spine
/// insert, a few organ ellipses, and one to three low-contrast lesions.
///
/// Deterministic for a given (count, grid, pixel_size, seed).
pub fn default_phantom_suite(count: usize, grid: usize, pixel_size: f64, seed: u64) -> Vec<Phantom> {
    let mu_water = 0.19;
    let hu = |delta_hu: f64| mu_water * delta_hu / 1000.0;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let fov = grid as f64 * pixel_size;

    (0..count)
        .map(|_| {
            let body_a = fov * rng.gen_range(0.30..0.36);
            let body_b = fov * rng.gen_range(0.22..0.28);
            let mut ellipses = vec![
                // body: soft tissue a bit above water
                Ellipse {
                    cx: rng.gen_range(-0.02..0.02) * fov,
                    cy: rng.gen_range(-0.02..0.02) * fov,
                    a: body_a,
                    b: body_b,
                    theta: rng.gen_range(-0.08..0.08),
                    mu: mu_water + hu(rng.gen_range(20.0..45.0)),
                },
                // spine insert near the bottom
                Ellipse {
                    cx: rng.gen_range(-0.01..0.01) * fov,
                    cy: -body_b * 0.62,
                    a: fov * 0.035,
                    b: fov * 0.045,
                    theta: 0.0,
                    mu: hu(rng.gen_range(650.0..900.0)),
                },
            ];
            // organs: 2-3 mild-contrast ellipses inside the body
            let organs = rng.gen_range(2..=3);
            for _ in 0..organs {
                let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let rad = rng.gen_range(0.15..0.5);
                ellipses.push(Ellipse {
                    cx: ang.cos() * rad * body_a,
                    cy: ang.sin() * rad * body_b,
                    a: body_a * rng.gen_range(0.18..0.35),
                    b: body_b * rng.gen_range(0.18..0.35),
                    theta: rng.gen_range(0.0..std::f64::consts::PI),
                    mu: hu(rng.gen_range(-35.0..55.0)),
                });
            }
            // lesions: always at least one low-contrast disc
            let lesions = (0..rng.gen_range(1..=3))
                .map(|_| {
                    let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let rad = rng.gen_range(0.1..0.55);
                    Lesion {
                        cx: ang.cos() * rad * body_a,
                        cy: ang.sin() * rad * body_b,
                        r: rng.gen_range(0.35..0.85),
                        dmu: hu(rng.gen_range(-40.0..-18.0)),
                    }
                })
                .collect();
            Phantom { ellipses, lesions, grid, pixel_size, mu_water }
        })
        .collect()
}
