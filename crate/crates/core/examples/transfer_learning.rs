//! Pre-trains the SOH network on a small synthetic corpus, then fine-tunes
//! it with a handful of segments from oracle "real" cells.
//!
//! This shows the API, not the effect: with ~2,000 segments and 15 epochs the
//! model is under-trained and the fine-tune is as likely to hurt as help.
//! The desk-scale pipeline (default config) is where transfer pays off.
//!
//!     cargo run --release --example transfer_learning

use std::sync::Arc;

use soh_fusion::cell::{CellParameters, SimConfig, NOMINAL_CAPACITY_AH};
use soh_fusion::datagen::{
    generate_corpus, perturb_parameters, synth_fade_trajectory, CorpusConfig, FadeKind, Normalization, ParamSet,
    PerturbationConfig, SourceId,
};
use soh_fusion::net::{evaluate, train, transfer_finetune, Network, NetworkSpec, TrainSet, TrainingConfig, TransferConfig};
use soh_fusion::pipeline::{oracle_cells, simulate_oracle, OracleConfig};
use soh_fusion::protocol::mscc_default;

fn main() -> soh_fusion::Result<()> {
    let base = Arc::new(CellParameters::reference());
    let proto = mscc_default()?;
    let mut sets = Vec::new();
    for (i, kind) in [FadeKind::Mild, FadeKind::Severe].into_iter().enumerate() {
        let traj = synth_fade_trajectory(kind, 20, &base, i as u64, SimConfig::default())?;
        let pc = PerturbationConfig {
            draws_per_mean: 2,
            seed: 10 + i as u64,
            ..PerturbationConfig::default()
        };
        for e in &traj.entries {
            for aging in perturb_parameters(&e.aging, &pc)? {
                let source = SourceId {
                    cell: i as u32,
                    cycle: e.cycle,
                    set: sets.len() as u32,
                };
                sets.push(ParamSet { source, base: base.clone(), aging });
            }
        }
    }
    let cfg = CorpusConfig {
        master_seed: 4,
        max_segments_per_set: Some(10),
        ..CorpusConfig::default()
    };
    let corpus = generate_corpus(&sets, &proto, SimConfig::default(), &cfg)?.dataset.records;
    println!("corpus: {} segments", corpus.len());

    let mut net = Network::<f32>::new(NetworkSpec::default(), 1)?;
    let tc = TrainingConfig {
        batch_size: 32,
        max_epochs: 15,
        ..TrainingConfig::default()
    };
    train(&mut net, &TrainSet::from_records(&corpus, NOMINAL_CAPACITY_AH), &tc, |s| {
        println!("epoch {:>2}  train RMSE {:.2}%", s.epoch, s.rmse_pct)
    })?;

    let oc = OracleConfig {
        cycles: 15,
        segments_per_cycle: 4,
        seed: 5,
        ..OracleConfig::default()
    };
    let targets = simulate_oracle(&oracle_cells(&base, 3), &proto, &oc, &Normalization::default())?.records;
    let (real, held): (Vec<_>, Vec<_>) = targets.iter().enumerate().partition(|(i, _)| i % 4 == 0);
    let real: Vec<_> = real.into_iter().map(|(_, r)| *r).take(45).collect();
    let held: Vec<_> = held.into_iter().map(|(_, r)| *r).collect();
    let eval = TrainSet::from_records(&held, NOMINAL_CAPACITY_AH);

    let tc = TransferConfig {
        real_target: 500,
        sim_samples: 2_000,
        ..TransferConfig::default()
    };
    let before = evaluate(&net, &eval)?;
    let (tuned, _) = transfer_finetune(&net, &real, &corpus, &tc)?;
    let after = evaluate(&tuned, &eval)?;
    for (b, a) in before.per_cell.iter().zip(&after.per_cell) {
        println!("cell {}: MAE {:.2}% -> {:.2}%", b.cell, b.mae_soh_pct, a.mae_soh_pct);
    }
    println!("overall: {:.2}% -> {:.2}%", before.mae_soh_pct, after.mae_soh_pct);
    Ok(())
}
