//! Report artifacts: windowed grayscale PNG export, simple SVG line charts,
//! and feature-map tiling.

use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::FormatError;

/// The display window used for figure-style exports, in HU.
pub const DISPLAY_WINDOW_HU: (f64, f64) = (-160.0, 240.0);

/// Write a 2-d image as 8-bit grayscale PNG with an explicit display window.
pub fn write_png(path: &Path, image: &Tensor<f64>, window: (f64, f64)) -> Result<(), FormatError> {
    assert_eq!(image.shape().len(), 2, "write_png expects a 2-d image");
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let (lo, hi) = window;
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let pixels: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, pixels)
        .expect("buffer size matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| FormatError::Invalid { field: "png", detail: e.to_string() })?;
    Ok(())
}

/// Tile a [C, h, w] (or [1, C, h, w]) feature stack into a near-square grid;
/// returns the grid image and the (rows, cols) layout.
pub fn tile_feature_maps(features: &Tensor<f64>) -> (Tensor<f64>, (usize, usize)) {
    let (c, h, w) = match *features.shape() {
        [c, h, w] => (c, h, w),
        [1, c, h, w] => (c, h, w),
        ref s => panic!("tile_feature_maps expects [C,h,w] or [1,C,h,w], got {s:?}"),
    };
    let cols = (c as f64).sqrt().ceil() as usize;
    let rows = c.div_ceil(cols);
    let mut grid = vec![0.0f64; rows * h * cols * w];
    for ch in 0..c {
        let (tr, tc) = (ch / cols, ch % cols);
        for i in 0..h {
            let src = ch * h * w + i * w;
            let dst = (tr * h + i) * cols * w + tc * w;
            grid[dst..dst + w].copy_from_slice(&features.data()[src..src + w]);
        }
    }
    (Tensor::new(vec![rows * h, cols * w], grid), (rows, cols))
}

/// One line series for the chart: label and per-epoch values (NaN skipped).
pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

/// Hand-rolled SVG line chart: epochs on x, values on y, log-free axes,
/// legend in the top right. Deterministic output for identical input.
pub fn svg_line_chart(title: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (width, height) = (760.0, 420.0);
    let (ml, mr, mt, mb) = (64.0, 150.0, 40.0, 44.0);
    let plot_w = width - ml - mr;
    let plot_h = height - mt - mb;

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let mut x_max = 1usize;
    for s in series {
        for (i, &v) in s.values.iter().enumerate() {
            if v.is_finite() {
                y_min = y_min.min(v);
                y_max = y_max.max(v);
                x_max = x_max.max(i + 1);
            }
        }
    }
    if !y_min.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-300 {
        y_max = y_min + 1.0;
    }
    let pad = 0.06 * (y_max - y_min);
    let (y_lo, y_hi) = (y_min - pad, y_max + pad);

    let x_of = |epoch: f64| ml + (epoch - 1.0) / ((x_max.max(2) - 1) as f64) * plot_w;
    let y_of = |v: f64| mt + (1.0 - (v - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" font-size=\"15\">{}</text>\n",
        ml,
        xml_escape(title)
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h,
        ml + plot_w,
        mt + plot_h,
        mt + plot_h
    ));
    // y ticks
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{ml}\" y2=\"{y:.1}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3e}</text>\n",
            ml - 4.0,
            ml - 8.0,
            y + 4.0
        ));
    }
    // x ticks: start, mid, end
    for epoch in [1, x_max.div_ceil(2), x_max] {
        let x = x_of(epoch as f64);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{epoch}</text>\n",
            mt + plot_h,
            mt + plot_h + 4.0,
            mt + plot_h + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>\n\
         <text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}</text>\n",
        ml + plot_w / 2.0,
        height - 8.0,
        mt + plot_h / 2.0,
        mt + plot_h / 2.0,
        xml_escape(y_label)
    ));
    // series
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut points = String::new();
        for (i, &v) in s.values.iter().enumerate() {
            if v.is_finite() {
                points.push_str(&format!("{:.1},{:.1} ", x_of((i + 1) as f64), y_of(v)));
            }
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.trim_end()
        ));
        let ly = mt + 14.0 + 16.0 * si as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly:.1}\" x2=\"{}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{:.1}\">{}</text>\n",
            ml + plot_w + 10.0,
            ml + plot_w + 34.0,
            ml + plot_w + 40.0,
            ly + 4.0,
            xml_escape(s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_layout_and_values() {
        // 5 channels of 2x3 maps -> 3x2 grid (cols = ceil(sqrt 5) = 3)
        let data: Vec<f64> = (0..5 * 6).map(|i| i as f64).collect();
        let features = Tensor::new(vec![5, 2, 3], data);
        let (grid, (rows, cols)) = tile_feature_maps(&features);
        assert_eq!((rows, cols), (2, 3));
        assert_eq!(grid.shape(), &[4, 9]);
        // channel 4 sits at tile (1, 1): grid[2][3] = value of ch4[0][0] = 24
        assert_eq!(grid.data()[2 * 9 + 3], 24.0);
        // empty tile (1, 2) stays zero
        assert_eq!(grid.data()[2 * 9 + 6], 0.0);
    }

    #[test]
    fn svg_chart_contains_series_and_epoch_axis() {
        let svg = svg_line_chart(
            "validation",
            "mse",
            &[
                Series { label: "cnn-mse", values: &[0.5, 0.4, 0.3] },
                Series { label: "wgan-vgg", values: &[0.6, f64::NAN, 0.35] },
            ],
        );
        assert!(svg.contains("cnn-mse") && svg.contains("wgan-vgg"));
        assert!(svg.contains("polyline"));
        // x axis length equals the epoch count
        assert!(svg.contains(">3<"));
        // deterministic output
        let again = svg_line_chart(
            "validation",
            "mse",
            &[
                Series { label: "cnn-mse", values: &[0.5, 0.4, 0.3] },
                Series { label: "wgan-vgg", values: &[0.6, f64::NAN, 0.35] },
            ],
        );
        assert_eq!(svg, again);
    }

    #[test]
    fn png_roundtrip_wrote_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = Tensor::new(vec![4, 4], (0..16).map(|i| i as f64 * 30.0 - 160.0).collect());
        write_png(&path, &img, DISPLAY_WINDOW_HU).unwrap();
        let loaded = image::open(&path).unwrap().to_luma8();
        assert_eq!(loaded.dimensions(), (4, 4));
        assert_eq!(loaded.get_pixel(0, 0).0[0], 0); // -160 HU -> black
    }
}
