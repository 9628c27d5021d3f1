//! The full desk-scale comparative study in one call: simulate a corpus,
//! train the proxy extractor, train every requested variant, denoise
//! held-out slices, and evaluate — producing the artifacts the acceptance
//! criteria inspect.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::ctsim::{default_phantom_suite, make_pair, render_phantom_hu, CtPair, ScanProtocol};
use crate::data::{extract_patches, ExtractConfig, Window};
use crate::denoise::denoise_image;
use crate::error::TrainError;
use crate::losses::{LossKind, LossWeights};
use crate::metrics::{evaluate_methods, EvalReport, RoiSpec};
use crate::nets::{FeatureExtractorSpec, GeneratorSpec};
use crate::train::{train, train_proxy_extractor, History, ProxyConfig, TrainConfig};
use crate::viz::{svg_line_chart, write_png, Series, DISPLAY_WINDOW_HU};
use crate::wvgf;

/// Scale parameters of one study run.
#[derive(Debug, Clone)]
pub struct BenchProfile {
    pub name: String,
    /// Slices feeding the patch corpus.
    pub n_slices: usize,
    /// Additional held-out slices used for whole-image evaluation.
    pub n_eval_slices: usize,
    pub grid: usize,
    pub pixel_size: f64,
    pub protocol: ScanProtocol,
    pub n_train: usize,
    pub n_val: usize,
    pub patch_side: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub checkpoint_every: usize,
    pub proxy_epochs: usize,
}

impl BenchProfile {
    /// The full study scale: six variants, 40 epochs, a 10k-pair corpus of
    /// 64x64 patches from 200 slices. Multi-hour on commodity CPUs.
    pub fn full() -> Self {
        BenchProfile {
            name: "full".into(),
            n_slices: 200,
            n_eval_slices: 10,
            grid: 128,
            pixel_size: 0.3,
            protocol: ScanProtocol::default(),
            n_train: 10_000,
            n_val: 1_000,
            patch_side: 64,
            batch_size: 128,
            n_epochs: 40,
            checkpoint_every: 10,
            proxy_epochs: 3,
        }
    }

    /// Reduced scale for CPU-bound environments: same pipeline, smaller
    /// patches, smaller batches (more optimizer steps per unit compute),
    /// fewer epochs. On the order of 1.5 hours on two cores.
    pub fn desk() -> Self {
        BenchProfile {
            name: "desk".into(),
            n_slices: 64,
            n_eval_slices: 10,
            grid: 128,
            pixel_size: 0.3,
            protocol: ScanProtocol::default(),
            n_train: 2_560,
            n_val: 256,
            patch_side: 32,
            batch_size: 32,
            n_epochs: 20,
            checkpoint_every: 10,
            proxy_epochs: 2,
        }
    }

    /// Minutes-scale smoke profile for determinism checks and CI.
    pub fn smoke() -> Self {
        BenchProfile {
            name: "smoke".into(),
            n_slices: 8,
            n_eval_slices: 2,
            grid: 64,
            pixel_size: 0.3,
            protocol: ScanProtocol { n_views: 96, n_detectors: 96, ..Default::default() },
            n_train: 80,
            n_val: 16,
            patch_side: 16,
            batch_size: 8,
            n_epochs: 2,
            checkpoint_every: 2,
            proxy_epochs: 1,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "desk" => Some(Self::desk()),
            "smoke" => Some(Self::smoke()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub profile: BenchProfile,
    pub seed: u64,
    pub kinds: Vec<LossKind>,
    pub out_dir: PathBuf,
}

/// Per-variant outputs.
#[derive(Debug)]
pub struct VariantResult {
    pub kind: LossKind,
    pub history: History,
    pub weights_digest: String,
    pub diverged_at: Option<usize>,
    /// Denoised held-out slices, HU.
    pub denoised: Vec<Tensor<f64>>,
}

/// Everything the acceptance criteria need to inspect.
#[derive(Debug)]
pub struct BenchResult {
    pub corpus_digest: String,
    pub extractor_digest: String,
    pub variants: Vec<VariantResult>,
    /// Per-eval-slice reports (methods + ldct baseline rows).
    pub per_slice: Vec<EvalReport>,
    /// Report of per-method means over the eval slices.
    pub mean_report: EvalReport,
    /// NDCT flat-ROI SD per eval slice (the reference noise level).
    pub ndct_roi_sd: Vec<f64>,
    pub window: Window,
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Most uniform `size`-square window of the clean image that sits inside
/// tissue: the flat-region ROI used for noise statistics.
pub fn find_flat_roi(clean_hu: &Tensor<f64>, size: usize) -> RoiSpec {
    let (h, w) = (clean_hu.shape()[0], clean_hu.shape()[1]);
    let mut best = (f64::INFINITY, 0usize, 0usize);
    let stride = 4;
    let mut r0 = 0;
    while r0 + size <= h {
        let mut c0 = 0;
        while c0 + size <= w {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for i in r0..r0 + size {
                for j in c0..c0 + size {
                    let v = clean_hu.data()[i * w + j];
                    sum += v;
                    sq += v * v;
                }
            }
            let n = (size * size) as f64;
            let mean = sum / n;
            let var = sq / n - mean * mean;
            if mean > -100.0 && var < best.0 {
                best = (var, r0, c0);
            }
            c0 += stride;
        }
        r0 += stride;
    }
    RoiSpec::new(best.1, best.2, size, size, "flat")
}

/// Run the study. Everything is derived from (profile, seed): simulation,
/// extraction, proxy training, and per-variant training each consume their
/// own deterministic seed stream.
pub fn run_bench(config: &BenchConfig) -> Result<BenchResult, TrainError> {
    let profile = &config.profile;
    let out = &config.out_dir;
    std::fs::create_dir_all(out)?;
    let t_start = Instant::now();

    // 1. simulate slices (per-slice seeds: order-independent, so the batch
    //    can run on the thread pool)
    log::info!("bench[{}]: simulating {} slices", profile.name, profile.n_slices + profile.n_eval_slices);
    let phantoms = default_phantom_suite(
        profile.n_slices + profile.n_eval_slices,
        profile.grid,
        profile.pixel_size,
        mix_seed(config.seed, 1),
    );
    let pairs: Vec<CtPair> = phantoms
        .par_iter()
        .enumerate()
        .map(|(i, ph)| make_pair(ph, &profile.protocol, mix_seed(config.seed, 100 + i as u64)))
        .collect();

    // 2. corpus from the leading slices
    let corpus_inputs: Vec<(Tensor<f64>, Tensor<f64>)> = pairs[..profile.n_slices]
        .iter()
        .map(|p| (p.ndct.clone(), p.ldct.clone()))
        .collect();
    let extract = ExtractConfig {
        patch_side: profile.patch_side,
        n_train: profile.n_train,
        n_val: profile.n_val,
        seed: mix_seed(config.seed, 2),
        ..Default::default()
    };
    let corpus = extract_patches(&corpus_inputs, &extract)
        .map_err(|e| TrainError::GradMismatch(format!("extraction: {e}")))?;
    let window = corpus.window();
    corpus.save(&out.join("corpus.wvgf"))?;
    let corpus_digest = corpus.digest();
    log::info!(
        "bench[{}]: corpus {} pairs (digest {})",
        profile.name,
        corpus.len(),
        &corpus_digest[..12]
    );

    // 3. frozen proxy feature extractor
    let fspec = FeatureExtractorSpec::default();
    let proxy_cfg = ProxyConfig {
        epochs: profile.proxy_epochs,
        seed: mix_seed(config.seed, 3),
        ..Default::default()
    };
    let (extractor, proxy_loss) = train_proxy_extractor::<f32>(&corpus, &fspec, &proxy_cfg)?;
    extractor.save(&out.join("extractor.wvgf"))?;
    let extractor_digest = extractor.digest();
    log::info!("bench[{}]: proxy extractor trained (loss {proxy_loss:.4e})", profile.name);

    // 4. held-out evaluation data
    let eval_pairs = &pairs[profile.n_slices..];
    let eval_clean: Vec<Tensor<f64>> =
        phantoms[profile.n_slices..].iter().map(render_phantom_hu).collect();
    let flat_rois: Vec<RoiSpec> = eval_clean.iter().map(|c| find_flat_roi(c, 12)).collect();

    // 5. train every variant and denoise the held-out slices
    let gspec = GeneratorSpec::default();
    let mut variants = Vec::with_capacity(config.kinds.len());
    for (ki, &kind) in config.kinds.iter().enumerate() {
        let vdir = out.join("variants").join(kind.to_string());
        std::fs::create_dir_all(&vdir)?;
        let tcfg = TrainConfig {
            loss_kind: kind,
            weights: LossWeights::default(),
            n_epochs: profile.n_epochs,
            batch_size: profile.batch_size,
            patch_side: profile.patch_side,
            seed: mix_seed(config.seed, 1000 + ki as u64),
            checkpoint_every: profile.checkpoint_every,
            ..Default::default()
        };
        let t0 = Instant::now();
        log::info!("bench[{}]: training {kind} for {} epochs", profile.name, profile.n_epochs);
        let outcome = train::<f32>(&corpus, &tcfg, Some((&fspec, &extractor)), Some(&vdir))?;
        log::info!(
            "bench[{}]: {kind} done in {:.0}s (critic {} / generator {} updates)",
            profile.name,
            t0.elapsed().as_secs_f64(),
            outcome.history.counters.critic_updates,
            outcome.history.counters.generator_updates,
        );
        outcome.generator.save(&vdir.join("generator.wvgf"))?;
        let weights_digest = outcome.generator.digest();

        let denoised: Vec<Tensor<f64>> = eval_pairs
            .iter()
            .map(|p| denoise_image(&outcome.generator, &gspec, &window, &p.ldct))
            .collect::<Result<_, _>>()?;
        variants.push(VariantResult {
            kind,
            history: outcome.history,
            weights_digest,
            diverged_at: outcome.diverged_at,
            denoised,
        });
    }

    // 6. evaluation reports
    let peak = window.width();
    let mut per_slice = Vec::with_capacity(eval_pairs.len());
    let mut ndct_roi_sd = Vec::with_capacity(eval_pairs.len());
    for (si, pair) in eval_pairs.iter().enumerate() {
        let methods: Vec<(String, Tensor<f64>)> = variants
            .iter()
            .map(|v| (v.kind.to_string(), v.denoised[si].clone()))
            .collect();
        let rois = vec![flat_rois[si].clone()];
        let report = evaluate_methods(&methods, &pair.ndct, &pair.ldct, &rois, peak)
            .map_err(|e| TrainError::GradMismatch(format!("evaluation: {e}")))?;
        let nd_stats = crate::metrics::roi_stats(&pair.ndct, &flat_rois[si])
            .map_err(|e| TrainError::GradMismatch(format!("roi: {e}")))?;
        ndct_roi_sd.push(nd_stats.sd);
        std::fs::write(out.join(format!("eval_slice{si}.csv")), report.to_csv())?;
        per_slice.push(report);
    }
    let mean_report = mean_over_slices(&per_slice);
    std::fs::write(out.join("eval_report.csv"), mean_report.to_csv())?;
    std::fs::write(out.join("eval_report.txt"), mean_report.to_table())?;

    // 7. loss curves and previews
    write_curves(out, &variants)?;
    if let (Some(pair), Some(variant)) = (eval_pairs.first(), variants.first()) {
        write_png(&out.join("preview_ndct.png"), &pair.ndct, DISPLAY_WINDOW_HU)
            .map_err(TrainError::Format)?;
        write_png(&out.join("preview_ldct.png"), &pair.ldct, DISPLAY_WINDOW_HU)
            .map_err(TrainError::Format)?;
        write_png(
            &out.join(format!("preview_{}.png", variant.kind)),
            &variant.denoised[0],
            DISPLAY_WINDOW_HU,
        )
        .map_err(TrainError::Format)?;
    }

    // 8. manifest with digests
    let manifest = serde_json::json!({
        "profile": profile.name,
        "seed": config.seed,
        "kinds": config.kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
        "corpus_digest": corpus_digest,
        "extractor_digest": extractor_digest,
        "variants": variants.iter().map(|v| serde_json::json!({
            "kind": v.kind.to_string(),
            "weights_digest": v.weights_digest,
            "history_digest": wvgf::digest_bytes(v.history.to_csv_deterministic().as_bytes()),
            "diverged_at": v.diverged_at,
        })).collect::<Vec<_>>(),
        "scale": {
            "n_slices": profile.n_slices,
            "n_eval_slices": profile.n_eval_slices,
            "grid": profile.grid,
            "n_train": profile.n_train,
            "n_val": profile.n_val,
            "patch_side": profile.patch_side,
            "batch_size": profile.batch_size,
            "n_epochs": profile.n_epochs,
        },
        "wall_seconds": t_start.elapsed().as_secs_f64(),
    });
    std::fs::write(out.join("bench-manifest.json"), serde_json::to_string_pretty(&manifest).unwrap())?;

    Ok(BenchResult {
        corpus_digest,
        extractor_digest,
        variants,
        per_slice,
        mean_report,
        ndct_roi_sd,
        window,
    })
}

fn mean_over_slices(per_slice: &[EvalReport]) -> EvalReport {
    assert!(!per_slice.is_empty());
    let first = &per_slice[0];
    let n = per_slice.len() as f64;
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(ri, row0)| {
            let mut psnr = 0.0;
            let mut ssim = 0.0;
            let mut rois = vec![crate::metrics::RoiStats { mean: 0.0, sd: 0.0, degenerate: false }; row0.rois.len()];
            for report in per_slice {
                let row = &report.rows[ri];
                psnr += row.psnr_db;
                ssim += row.ssim;
                for (acc, r) in rois.iter_mut().zip(row.rois.iter()) {
                    acc.mean += r.mean;
                    acc.sd += r.sd;
                }
            }
            for r in &mut rois {
                r.mean /= n;
                r.sd /= n;
            }
            crate::metrics::EvalRow {
                method: row0.method.clone(),
                psnr_db: psnr / n,
                psnr_identical: false,
                ssim: ssim / n,
                rois,
            }
        })
        .collect();
    EvalReport { roi_labels: first.roi_labels.clone(), rows }
}

fn write_curves(out: &Path, variants: &[VariantResult]) -> Result<(), TrainError> {
    let collect = |f: fn(&crate::train::EpochRecord) -> f64| -> Vec<(String, Vec<f64>)> {
        variants
            .iter()
            .map(|v| (v.kind.to_string(), v.history.records.iter().map(f).collect()))
            .collect()
    };
    let charts: [(&str, &str, Vec<(String, Vec<f64>)>); 3] = [
        ("validation MSE", "mse", collect(|r| r.mse)),
        ("validation perceptual loss", "vgg", collect(|r| r.vgg)),
        ("Wasserstein estimate", "w_raw", collect(|r| r.w_raw)),
    ];
    for (title, stem, data) in charts {
        let series: Vec<Series<'_>> =
            data.iter().map(|(label, values)| Series { label, values }).collect();
        let svg = svg_line_chart(title, stem, &series);
        std::fs::write(out.join(format!("loss_{stem}.svg")), svg)?;
    }
    Ok(())
}
