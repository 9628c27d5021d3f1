//! Calibration probe for the CT pipeline (used to freeze test baselines).

use ldct_forge_core::ctsim::*;
use ldct_forge_core::Tensor;

fn rmse(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let n = a.numel() as f64;
    (a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt()
}

fn roi_stats(img: &Tensor<f64>, r0: usize, c0: usize, h: usize, w: usize) -> (f64, f64) {
    let n = img.shape()[1];
    let mut vals = Vec::new();
    for i in r0..r0 + h {
        for j in c0..c0 + w {
            vals.push(img.data()[i * n + j]);
        }
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64;
    (m, var.sqrt())
}

fn main() {
    let grid = 128usize;
    let px = 0.3;
    let suite = default_phantom_suite(3, grid, px, 4242);
    let phantom = &suite[0];
    let protocol = ScanProtocol::default();

    // noise-free roundtrip
    let mu = render_phantom(phantom);
    let sino = radon_forward_scaled(&mu, &protocol, px);
    let recon = fbp_reconstruct(&sino);
    println!("roundtrip RMSE (mu units): {:.6}", rmse(&recon, &mu));
    println!("phantom mu range: {:.4}..{:.4}",
        mu.data().iter().cloned().fold(f64::INFINITY, f64::min),
        mu.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    // center value check
    println!("center: phantom {:.4} recon {:.4}", mu.data()[64*128+64], recon.data()[64*128+64]);

    // noisy pair
    let pair = make_pair(phantom, &protocol, 7);
    println!("clamped nd {} / ld {} of {}", pair.ndct_noise.clamped_rays, pair.ldct_noise.clamped_rays, pair.ndct_noise.total_rays);
    // flat ROI near center (body soft tissue, avoiding lesions hopefully)
    for (r0, c0) in [(60, 60), (52, 70), (70, 50)] {
        let (mn, sn) = roi_stats(&pair.ndct, r0, c0, 10, 10);
        let (ml, sl) = roi_stats(&pair.ldct, r0, c0, 10, 10);
        println!("ROI ({r0},{c0}): NDCT mean {mn:7.1} SD {sn:6.1} | LDCT mean {ml:7.1} SD {sl:6.1} HU");
    }
    // lesion positions
    for l in &phantom.lesions {
        let half = (grid as f64 - 1.0) / 2.0;
        let col = (l.cx / px + half).round() as usize;
        let row = (half - l.cy / px).round() as usize;
        println!("lesion at ({row},{col}) r={:.2}cm dmu={:.4} (~{:.0} HU)", l.r, l.dmu, 1000.0*l.dmu/phantom.mu_water);
    }
    for p in &suite {
        println!("slice lesions: {}", p.lesions.len());
    }
}
