use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soh_fusion::net::{Mode, Network, NetworkSpec};
#[test]
fn probe() {
    for seed in [2u64, 7] {
        let mut net = Network::<f64>::new(NetworkSpec::default(), seed).unwrap();
        net.label_offset = 2.9;
        net.label_scale = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..4).map(|_| rng.random_range(2.5..3.3)).collect();
        let (_, g, _) = net.loss_and_gradients(&x, &y).unwrap();
        let loss = |n: &Network<f64>| {
            let p = n.forward(&x, Mode::Train).unwrap();
            p.iter().zip(&y).map(|(p, l)| (p - l).powi(2)).sum::<f64>() / 4.0
        };
        // worst over all params at h=1e-5
        let mut worst = (0.0, 0usize);
        let mut probe = net.clone();
        for i in 0..net.n_params() {
            let w = net.params[i];
            probe.params[i] = w + 1e-5; let u = loss(&probe);
            probe.params[i] = w - 1e-5; let d = loss(&probe);
            probe.params[i] = w;
            let e = ((u - d) / 2e-5 - g[i]).abs();
            if e > worst.0 { worst = (e, i); }
        }
        let i = worst.1;
        eprintln!("seed {seed}: n_params {} worst idx {i} abs {:.3e} grad {:.6e}", net.n_params(), worst.0, g[i]);
        let w = net.params[i];
        let l0 = loss(&net);
        for h in [1e-4, 1e-5, 1e-6, 1e-7, 1e-8] {
            probe.params[i] = w + h; let u = loss(&probe);
            probe.params[i] = w - h; let d = loss(&probe);
            probe.params[i] = w;
            eprintln!("  h {h:e}: fwd {:.6e} bwd {:.6e} central {:.6e}", (u - l0) / h, (l0 - d) / h, (u - d) / (2.0 * h));
        }
    }
}
