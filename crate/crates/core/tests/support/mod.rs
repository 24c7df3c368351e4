pub mod fdm;

use soh_fusion::cell::{CellModel, CellParameters, SimConfig, FARADAY, NOMINAL_CAPACITY_AH};

use fdm::SphereFdm;

/// Worst relative surface-stoichiometry error after the first 10 s for a
/// constant-current step of `c_rate` lasting `duration` seconds.
pub fn pade_vs_fdm(c_rate: f64, duration: usize, soc0: f64) -> (f64, f64) {
    let p = CellParameters::reference();
    let model = CellModel::pristine(&p, SimConfig::default()).unwrap();
    let mut state = model.init_state(soc0).unwrap();
    let current = c_rate * NOMINAL_CAPACITY_AH;

    let area = |eps: f64, r: f64, l: f64| 3.0 * eps / r * l * p.plate_area;
    let flux_n = current / (FARADAY * area(p.active_vol_frac.n, p.particle_radius.n, p.electrode_thickness.n));
    let flux_p = -current / (FARADAY * area(p.active_vol_frac.p, p.particle_radius.p, p.electrode_thickness.p));
    let mut fdm_n = SphereFdm::uniform(50, p.particle_radius.n, p.d_s.n, state.theta_bulk.n * p.c_max.n);
    let mut fdm_p = SphereFdm::uniform(50, p.particle_radius.p, p.d_s.p, state.theta_bulk.p * p.c_max.p);

    let sub = 20;
    let mut worst = (0.0f64, 0.0f64);
    for k in 1..=duration {
        model.step(&mut state, current).unwrap();
        for _ in 0..sub {
            fdm_n.step(flux_n, 1.0 / sub as f64);
            fdm_p.step(flux_p, 1.0 / sub as f64);
        }
        if k > 10 {
            let ts = model.surface_theta(&state);
            let en = (ts.n - fdm_n.surface() / p.c_max.n).abs() / (fdm_n.surface() / p.c_max.n);
            let ep = (ts.p - fdm_p.surface() / p.c_max.p).abs() / (fdm_p.surface() / p.c_max.p);
            worst = (worst.0.max(en), worst.1.max(ep));
        }
    }
    worst
}
