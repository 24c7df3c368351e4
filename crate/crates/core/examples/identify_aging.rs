//! Simulates an aged cell, then recovers its aging parameters from the
//! charge curve alone.
//!
//!     cargo run --release --example identify_aging

use soh_fusion::apso::ApsoConfig;
use soh_fusion::cell::{simulate_protocol, CellParameters, SimConfig};
use soh_fusion::identify::{identify_aging, AgingFitConfig, CurveMeta, MeasuredCurve};
use soh_fusion::protocol::make_cccv;

fn main() -> soh_fusion::Result<()> {
    let base = CellParameters::reference();
    let mut truth = base.aging();
    truth.eps_s_n *= 0.90;
    truth.eps_s_p *= 0.93;
    truth.d_s_n *= 0.8;
    truth.r0 *= 1.3;

    let tr = simulate_protocol(&base, &truth, &make_cccv(1.0, 4.2, 0.16)?, 0.0, SimConfig::default())?;
    let curve = MeasuredCurve::from_trace(&tr, 1, CurveMeta::builder().rate(1.0).build())?;

    let cfg = AgingFitConfig {
        apso: ApsoConfig::new(Vec::new()).with_iters(60).with_particles(40).with_seed(1),
        // film and kinetics stay at the warm start
        free: [true, true, true, true, false, false, true],
        ..AgingFitConfig::default()
    };
    let fit = identify_aging(&[curve], &base, &base.aging(), &cfg)?;
    println!("voltage RMSE {:.3} mV", fit.rmse_mv);
    for (name, got, want) in [
        ("eps_s_n", fit.aging.eps_s_n, truth.eps_s_n),
        ("eps_s_p", fit.aging.eps_s_p, truth.eps_s_p),
        ("d_s_n", fit.aging.d_s_n, truth.d_s_n),
        ("r0", fit.aging.r0, truth.r0),
    ] {
        println!("{name:<8} {got:.4e}  truth {want:.4e}  ({:+.2}%)", 100.0 * (got / want - 1.0));
    }
    Ok(())
}
