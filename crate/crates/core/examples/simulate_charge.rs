//! Charges the reference cell under CCCV and the default MSCC protocol, then
//! discharges it, and prints a summary of each run.
//!
//!     cargo run --example simulate_charge

use soh_fusion::cell::{simulate_protocol, CellParameters, SimConfig, TraceMode};
use soh_fusion::protocol::{make_cccv, make_discharge, mscc_default};

fn main() -> soh_fusion::Result<()> {
    let p = CellParameters::reference();
    let aging = p.aging();
    let runs = [
        ("CCCV 1C", make_cccv(1.0, 4.2, 0.16)?, 0.0),
        ("MSCC", mscc_default()?, 0.0),
        ("discharge 1C", make_discharge(1.0, 2.5)?, 1.0),
    ];
    println!("{:<14}{:>10}{:>12}{:>10}{:>10}{:>12}", "protocol", "time s", "Ah in", "CV s", "V end", "Li drift");
    for (name, proto, soc0) in runs {
        let t = std::time::Instant::now();
        let tr = simulate_protocol(&p, &aging, &proto, soc0, SimConfig::default())?;
        let cv = tr.samples.iter().filter(|s| s.mode == TraceMode::Cv).count();
        let last = tr.samples.last().expect("non-empty trace");
        println!(
            "{name:<14}{:>10.0}{:>12.4}{:>10}{:>10.4}{:>12.1e}   ({:.1} ms)",
            tr.duration(),
            tr.total_throughput(),
            cv,
            last.voltage,
            tr.lithium_drift(),
            t.elapsed().as_secs_f64() * 1e3
        );
    }
    Ok(())
}
