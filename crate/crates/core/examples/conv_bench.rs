//! Rough conv2d throughput probe used to size training profiles.

use ldct_forge_core::autodiff::kernels::conv2d;
use ldct_forge_core::Tensor;
use std::time::Instant;

fn main() {
    // generator-style layer: 32->32 channels, 3x3, on 64x64 and 32x32 patches
    for (side, batch) in [(64usize, 32usize), (32, 128)] {
        let x: Tensor<f32> = Tensor::full(vec![batch, 32, side, side], 0.5);
        let w: Tensor<f32> = Tensor::full(vec![32, 32, 3, 3], 0.01);
        let t0 = Instant::now();
        let reps = 6;
        for _ in 0..reps {
            let y = conv2d(&x, &w, 1, 1);
            std::hint::black_box(y);
        }
        let dt = t0.elapsed().as_secs_f64() / reps as f64;
        let macs = (batch * 32 * side * side * 32 * 9) as f64;
        println!(
            "side {side:3} batch {batch:3}: {:7.1} ms/conv, {:6.1} GMAC/s",
            dt * 1e3,
            macs / dt / 1e9
        );
    }
}
