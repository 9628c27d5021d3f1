//! Runs the desk-profile bench (used to pre-flight the acceptance study).

use ldct_forge_core::bench::{run_bench, BenchConfig, BenchProfile};
use ldct_forge_core::losses::LossKind;

fn main() {
    env_logger::Builder::from_default_env()
        .filter_level(log::LevelFilter::Info)
        .format_timestamp_secs()
        .init();
    let out = std::path::PathBuf::from("/root/bench-desk");
    let _ = std::fs::remove_dir_all(&out);
    let config = BenchConfig {
        profile: BenchProfile::desk(),
        seed: 2024,
        kinds: LossKind::ALL.to_vec(),
        out_dir: out,
    };
    let t0 = std::time::Instant::now();
    let result = run_bench(&config).unwrap();
    println!("desk bench in {:.0}s", t0.elapsed().as_secs_f64());
    for v in &result.variants {
        let last = v.history.records.last().unwrap();
        println!(
            "{:>9}: mse {:.4e} vgg {:.4e} w {:.4e}",
            v.kind.to_string(), last.mse, last.vgg, last.w_raw
        );
    }
    println!("{}", result.mean_report.to_table());
}
