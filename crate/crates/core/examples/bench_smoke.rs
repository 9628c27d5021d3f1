//! Drives the smoke-profile bench end-to-end.

use ldct_forge_core::bench::{run_bench, BenchConfig, BenchProfile};
use ldct_forge_core::losses::LossKind;

fn main() {
    env_logger::Builder::from_default_env()
        .filter_level(log::LevelFilter::Info)
        .init();
    let out = std::env::temp_dir().join("ldct-bench-smoke");
    let _ = std::fs::remove_dir_all(&out);
    let config = BenchConfig {
        profile: BenchProfile::smoke(),
        seed: 7,
        kinds: LossKind::ALL.to_vec(),
        out_dir: out.clone(),
    };
    let t0 = std::time::Instant::now();
    let result = run_bench(&config).unwrap();
    println!("smoke bench in {:.1}s", t0.elapsed().as_secs_f64());
    println!("corpus digest {}", &result.corpus_digest[..16]);
    for v in &result.variants {
        let last = v.history.records.last().unwrap();
        println!(
            "{:>9}: mse {:.4e} vgg {:.4e} w {:.4e} diverged {:?}",
            v.kind.to_string(), last.mse, last.vgg, last.w_raw, v.diverged_at
        );
    }
    println!("{}", result.mean_report.to_table());
    for f in std::fs::read_dir(&out).unwrap() {
        println!("  {}", f.unwrap().file_name().to_string_lossy());
    }
}
