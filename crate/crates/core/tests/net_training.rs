use std::sync::{Arc, OnceLock};

use soh_fusion::cell::{CellParameters, SimConfig, NOMINAL_CAPACITY_AH};
use soh_fusion::datagen::{
    generate_corpus, perturb_parameters, synth_fade_trajectory, CorpusConfig, FadeKind, Normalization, ParamSet,
    PerturbationConfig, SegmentRecord, SourceId,
};
use soh_fusion::net::{
    evaluate, replicate, train, transfer_finetune, transfer_set, Metrics, Mode, Network, NetworkSpec, Replication,
    TrainSet, TrainingConfig, TransferConfig,
};
use soh_fusion::pipeline::{oracle_cells, simulate_oracle, OracleConfig};
use soh_fusion::protocol::mscc_default;

/// 2,000 segments from one moderate trajectory, 20 cycles, 6 variants each.
fn corpus() -> &'static Vec<SegmentRecord> {
    static C: OnceLock<Vec<SegmentRecord>> = OnceLock::new();
    C.get_or_init(|| {
        let base = Arc::new(CellParameters::reference());
        let traj = synth_fade_trajectory(FadeKind::Moderate, 20, &base, 4, SimConfig::default()).unwrap();
        let pc = PerturbationConfig {
            draws_per_mean: 2,
            seed: 11,
            ..PerturbationConfig::default()
        };
        let mut sets = Vec::new();
        for e in &traj.entries {
            for aging in perturb_parameters(&e.aging, &pc).unwrap() {
                let source = SourceId {
                    cell: 0,
                    cycle: e.cycle,
                    set: sets.len() as u32,
                };
                sets.push(ParamSet {
                    source,
                    base: base.clone(),
                    aging,
                });
            }
        }
        let cfg = CorpusConfig {
            master_seed: 3,
            max_segments_per_set: Some(17),
            ..CorpusConfig::default()
        };
        let mut recs = generate_corpus(&sets, &mscc_default().unwrap(), SimConfig::default(), &cfg)
            .unwrap()
            .dataset
            .records;
        recs.truncate(2_000);
        assert_eq!(recs.len(), 2_000);
        recs
    })
}

fn anchor_config() -> TrainingConfig {
    TrainingConfig {
        batch_size: 16,
        seed: 1,
        ..TrainingConfig::default()
    }
}

fn pretrained() -> &'static Network<f32> {
    static N: OnceLock<Network<f32>> = OnceLock::new();
    N.get_or_init(|| {
        let data = TrainSet::from_records(corpus(), NOMINAL_CAPACITY_AH);
        let mut net = Network::<f32>::new(NetworkSpec::default(), 1).unwrap();
        train(&mut net, &data, &anchor_config(), |_| {}).unwrap();
        net
    })
}

fn targets() -> &'static Vec<SegmentRecord> {
    static T: OnceLock<Vec<SegmentRecord>> = OnceLock::new();
    T.get_or_init(|| {
        let cells = oracle_cells(&CellParameters::reference(), 3);
        let cfg = OracleConfig {
            cycles: 12,
            segments_per_cycle: 4,
            seed: 2,
            ..OracleConfig::default()
        };
        simulate_oracle(&cells, &mscc_default().unwrap(), &cfg, &Normalization::default())
            .unwrap()
            .records
    })
}

fn small_transfer() -> TransferConfig {
    let mut c = TransferConfig {
        real_target: 500,
        sim_samples: 2_000,
        ..TransferConfig::default()
    };
    c.training.batch_size = 64;
    c
}

fn eval_on(net: &Network<f32>, recs: &[SegmentRecord]) -> Metrics {
    evaluate(net, &TrainSet::from_records(recs, NOMINAL_CAPACITY_AH)).unwrap()
}

#[test]
fn two_thousand_segments_train_below_two_percent() {
    let net = pretrained();
    let m = eval_on(net, corpus());
    let pct = 100.0 * m.rmse_ah / NOMINAL_CAPACITY_AH;
    eprintln!("2000-segment train-set rmse {pct:.3}% (mae {:.3}%)", m.mae_soh_pct);
    assert!(pct <= 2.0, "{pct}");
}

#[test]
fn training_is_seeded_and_zero_epochs_is_identity() {
    let data = TrainSet::<f32>::from_records(&corpus()[..256], NOMINAL_CAPACITY_AH);
    let cfg = TrainingConfig {
        batch_size: 32,
        max_epochs: 2,
        seed: 5,
        ..TrainingConfig::default()
    };
    let run = || {
        let mut n = Network::<f32>::new(NetworkSpec::default(), 9).unwrap();
        let h = train(&mut n, &data, &cfg, |_| {}).unwrap();
        (n, h)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a.params, b.params);
    assert_eq!(a.buffers, b.buffers);
    assert_eq!(ha, hb);
    assert_eq!(ha.len(), 2);
    assert!((ha[1].lr - 5e-4 * 0.95).abs() < 1e-15);

    let init = Network::<f32>::new(NetworkSpec::default(), 9).unwrap();
    let mut zero = init.clone();
    let h = train(&mut zero, &data, &TrainingConfig { max_epochs: 0, ..cfg }, |_| {}).unwrap();
    assert!(h.is_empty());
    assert_eq!(zero, init);
}

#[test]
fn loss_is_mean_squared_error_in_ah() {
    let net = pretrained().cast::<f64>();
    let recs = &corpus()[..8];
    let data = TrainSet::<f64>::from_records(recs, NOMINAL_CAPACITY_AH);
    let (loss, _, _) = net.loss_and_gradients(&data.x, &data.y).unwrap();
    let pred = net.forward(&data.x, Mode::Train).unwrap();
    let mse = pred.iter().zip(&data.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / 8.0;
    assert!((loss - mse).abs() <= 1e-12 * mse.max(1e-12), "{loss} vs {mse}");
    // predictions come out in Ah, not in normalized units
    assert!(pred.iter().all(|p| (2.0..4.0).contains(p)), "{pred:?}");
}

#[test]
fn replication_of_45_gives_5000_exact_copies() {
    let real: Vec<SegmentRecord> = targets()[..45].to_vec();
    for how in [Replication::RoundRobin, Replication::Random(3)] {
        let rep = replicate(&real, 5_000, how);
        assert_eq!(rep.len(), 5_000);
        for r in &rep {
            let bytes = |x: &SegmentRecord| x.tensor.map(f32::to_bits);
            assert!(real.iter().any(|o| o == r && bytes(o) == bytes(r)));
        }
    }
    let set = transfer_set(&real, corpus(), &TransferConfig::default()).unwrap();
    assert_eq!(set.len(), 5_000 + corpus().len());
}

#[test]
fn transfer_compute_is_under_one_percent_of_pretraining() {
    // 5 epochs over 5,000 + 50,000 against 30 epochs over the full corpus
    let t = TransferConfig::default();
    let transfer = (t.training.max_epochs * (t.real_target + t.sim_samples)) as f64;
    let pretrain = (TrainingConfig::default().max_epochs * 1_733_782) as f64;
    let saving = 1.0 - transfer / pretrain;
    assert!(transfer / pretrain <= 0.01);
    assert!((saving - 0.99471).abs() < 5e-6, "{saving}");
}

#[test]
fn sim_only_transfer_is_a_bounded_control() {
    let net = pretrained();
    let before = eval_on(net, targets());
    let (tuned, h) = transfer_finetune(net, &[], corpus(), &small_transfer()).unwrap();
    assert_eq!(h.len(), 5);
    let after = eval_on(&tuned, targets());
    let drift = (after.mae_soh_pct - before.mae_soh_pct).abs();
    eprintln!("sim-only drift {drift:.4} pp");
    assert!(drift < 0.5, "{drift}");
}

#[test]
fn which_segment_is_replicated_barely_matters() {
    let net = pretrained();
    let real: Vec<SegmentRecord> = targets().iter().step_by(3).take(45).copied().collect();
    let eval: Vec<SegmentRecord> = targets().iter().skip(1).step_by(3).copied().collect();
    let run = |how| {
        let cfg = TransferConfig {
            replication: how,
            ..small_transfer()
        };
        let (tuned, _) = transfer_finetune(net, &real, corpus(), &cfg).unwrap();
        eval_on(&tuned, &eval).mae_soh_pct
    };
    let a = run(Replication::RoundRobin);
    let b = run(Replication::Random(17));
    eprintln!("replication robustness {a:.4} vs {b:.4}");
    assert!((a - b).abs() < 0.3);
}
