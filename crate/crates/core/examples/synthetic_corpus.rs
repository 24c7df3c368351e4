//! Builds a small synthetic corpus: one fade trajectory, perturbed parameter
//! sets around each cycle, and charge-curve segments cut from every set.
//!
//!     cargo run --release --example synthetic_corpus [out.bin]

use std::sync::Arc;

use soh_fusion::cell::{CellParameters, SimConfig};
use soh_fusion::datagen::{
    generate_corpus, perturb_parameters, synth_fade_trajectory, write_dataset, CorpusConfig, FadeKind, ParamSet,
    PerturbationConfig, SourceId,
};
use soh_fusion::protocol::mscc_default;

fn main() -> soh_fusion::Result<()> {
    let base = Arc::new(CellParameters::reference());
    let traj = synth_fade_trajectory(FadeKind::Severe, 20, &base, 1, SimConfig::default())?;
    let pc = PerturbationConfig {
        draws_per_mean: 2,
        seed: 2,
        ..PerturbationConfig::default()
    };
    let mut sets = Vec::new();
    for e in &traj.entries {
        for aging in perturb_parameters(&e.aging, &pc)? {
            let source = SourceId {
                cell: 0,
                cycle: e.cycle,
                set: sets.len() as u32,
            };
            sets.push(ParamSet { source, base: base.clone(), aging });
        }
    }
    let cfg = CorpusConfig {
        master_seed: 3,
        max_segments_per_set: Some(10),
        ..CorpusConfig::default()
    };
    let t = std::time::Instant::now();
    let corpus = generate_corpus(&sets, &mscc_default()?, SimConfig::default(), &cfg)?;
    let recs = &corpus.dataset.records;
    let caps: Vec<f64> = recs.iter().map(|r| r.label_capacity).collect();
    println!(
        "{} sets simulated ({} skipped) -> {} segments in {:.1} s",
        corpus.simulated,
        corpus.skipped,
        recs.len(),
        t.elapsed().as_secs_f64()
    );
    println!(
        "capacity label range {:.3}..{:.3} Ah, digest {}",
        caps.iter().copied().fold(f64::INFINITY, f64::min),
        caps.iter().copied().fold(0.0, f64::max),
        corpus.dataset.digest()
    );
    if let Some(path) = std::env::args().nth(1) {
        write_dataset(&corpus.dataset, path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
