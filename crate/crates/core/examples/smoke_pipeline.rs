//! Runs the whole cached pipeline at smoke scale and writes its report.
//! A second run with the same output directory reuses every stage. At this
//! scale it checks the plumbing; transfer gains need the default config.
//!
//!     cargo run --release --example smoke_pipeline [out-dir]

use soh_fusion::pipeline::{run_pipeline, PipelineConfig};

fn main() -> soh_fusion::Result<()> {
    let mut cfg = PipelineConfig::smoke();
    cfg.paths.out = std::env::args().nth(1).unwrap_or_else(|| "out-smoke".into()).into();
    let t = std::time::Instant::now();
    let r = run_pipeline(&cfg)?;
    println!("pipeline finished in {:.1} s, config digest {}", t.elapsed().as_secs_f64(), cfg.digest());
    for (b, a) in r.before.per_cell.iter().zip(&r.after.per_cell) {
        println!(
            "cell {}: MAE {:.2}% -> {:.2}%  (reduction {:.0}%)",
            b.cell,
            b.mae_soh_pct,
            a.mae_soh_pct,
            100.0 * r.reduction(b.cell).unwrap_or(0.0)
        );
    }
    println!("report under {}", cfg.paths.out.join("reports").join(&r.scenario.id).display());
    Ok(())
}
