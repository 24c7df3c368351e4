//! Runs the adaptive particle swarm on the standard test functions.
//!
//!     cargo run --example apso_benchmarks

use soh_fusion::apso::{bench, optimize, ApsoConfig};

fn main() -> soh_fusion::Result<()> {
    let cases: [(&str, fn(&[f64]) -> f64, f64); 3] = [
        ("sphere", bench::sphere, 5.0),
        ("rosenbrock", bench::rosenbrock, 2.0),
        ("rastrigin", bench::rastrigin, 5.12),
    ];
    for (name, f, r) in cases {
        let cfg = ApsoConfig::new(vec![(-r, r); 5]).with_iters(300).with_particles(40).with_seed(7);
        let res = optimize(f, &cfg)?;
        println!(
            "{name:<11} best {:.3e} after {} iterations at {:?}",
            res.best_fitness,
            res.history.len() - 1,
            res.best_position.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
