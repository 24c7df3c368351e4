//! Protocol-driven simulation and the reference capacity measurement.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::model::{CellModel, CellState, SimConfig};
use super::params::{AgingParameterSet, CellParameters};
use crate::error::{Error, Result};
use crate::protocol::{make_cccv, make_discharge, ControlMode, Controller, Observation, Protocol, SocReference, V_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceMode {
    Cc,
    Cv,
    Rest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Amperes, positive when charging.
    pub current: f64,
    pub voltage: f64,
    /// Cumulative charge put in, Ah.
    pub throughput: f64,
    pub soc: f64,
    pub mode: TraceMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub samples: Vec<Sample>,
    /// Dischargeable capacity of the simulated cell, Ah.
    pub final_capacity: f64,
    /// Solid-phase lithium at the start and end of the run, mol.
    pub lithium: [f64; 2],
}

impl SimTrace {
    pub fn total_throughput(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.throughput)
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn lithium_drift(&self) -> f64 {
        ((self.lithium[1] - self.lithium[0]) / self.lithium[0]).abs()
    }

    /// One row per sample, with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,current_A,voltage_V,throughput_Ah,soc,mode\n");
        for s in &self.samples {
            let mode = match s.mode {
                TraceMode::Cc => "CC",
                TraceMode::Cv => "CV",
                TraceMode::Rest => "REST",
            };
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{mode}\n",
                s.t, s.current, s.voltage, s.throughput, s.soc
            ));
        }
        out
    }
}

/// Runs `protocol` on `model` from `state` until the controller finishes.
///
/// A discharge that drives a particle surface out of its stoichiometric
/// range ends the run at the previous sample, as a voltage collapse would.
pub fn run_protocol(model: &CellModel, protocol: &Protocol, state: &mut CellState) -> Result<Vec<Sample>> {
    protocol.validate()?;
    let wrap = |time: f64| move |e: Error| Error::Simulation {
        time,
        source: Box::new(e),
    };
    let dt = model.config().dt;
    let mut ctl = Controller::start(protocol);
    let i0 = match ctl.mode {
        ControlMode::Cc(i) => i,
        _ => 0.0,
    };
    let mut samples = Vec::with_capacity((3.0 * 3600.0 / dt) as usize);
    samples.push(Sample {
        t: state.time,
        current: i0,
        voltage: model.terminal_voltage(state, i0).map_err(wrap(state.time))?,
        throughput: 0.0,
        soc: model.soc(state),
        mode: label(ctl.mode),
    });
    let t_start = state.time;
    let mut throughput = 0.0;
    loop {
        let current = match ctl.mode {
            ControlMode::Cc(i) => i,
            ControlMode::Cv(v) => model.solve_cv_step_current(state, v).map_err(wrap(state.time))?,
            ControlMode::Done => break,
        };
        let before = (current < 0.0).then(|| state.clone());
        let out = match model.step(state, current) {
            Ok(out) => out,
            Err(Error::SurfaceSaturation { .. }) if current < 0.0 => {
                *state = before.expect("saved before discharge step");
                break;
            }
            Err(e) => return Err(wrap(state.time)(e)),
        };
        throughput += current.max(0.0) * dt / 3600.0;
        samples.push(Sample {
            t: state.time,
            current,
            voltage: out.voltage,
            throughput,
            soc: out.soc,
            mode: label(ctl.mode),
        });
        let soc = match protocol.soc_reference {
            SocReference::Aged => out.soc,
            SocReference::Nominal => model.nominal_soc(state),
        };
        ctl.next(
            protocol,
            &Observation {
                soc,
                voltage: out.voltage,
                current,
                time: state.time - t_start,
            },
        );
    }
    Ok(samples)
}

fn label(mode: ControlMode) -> TraceMode {
    match mode {
        ControlMode::Cc(i) if i == 0.0 => TraceMode::Rest,
        ControlMode::Cv(_) => TraceMode::Cv,
        _ => TraceMode::Cc,
    }
}

/// Simulates `protocol` from `soc0` and labels the trace with the cell's
/// reference capacity.
pub fn simulate_protocol(
    params: &CellParameters,
    aging: &AgingParameterSet,
    protocol: &Protocol,
    soc0: f64,
    config: SimConfig,
) -> Result<SimTrace> {
    let model = CellModel::new(params, aging, config)?;
    simulate_with_model(&model, protocol, soc0)
}

pub fn simulate_with_model(model: &CellModel, protocol: &Protocol, soc0: f64) -> Result<SimTrace> {
    let mut state = model.init_state(soc0)?;
    let li0 = model.total_lithium(&state);
    let samples = run_protocol(model, protocol, &mut state)?;
    Ok(SimTrace {
        samples,
        final_capacity: reference_capacity(model)?,
        lithium: [li0, model.total_lithium(&state)],
    })
}

fn capacity_cache() -> &'static Mutex<HashMap<u64, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn model_key(model: &CellModel) -> u64 {
    let p = model.params();
    let mut h = DefaultHasher::new();
    let scalars = [
        p.electrode_thickness.n,
        p.electrode_thickness.sep,
        p.electrode_thickness.p,
        p.plate_area,
        p.particle_radius.n,
        p.particle_radius.p,
        p.electrolyte_vol_frac.n,
        p.electrolyte_vol_frac.sep,
        p.electrolyte_vol_frac.p,
        p.active_vol_frac.n,
        p.active_vol_frac.p,
        p.c_max.n,
        p.c_max.p,
        p.theta_0pct.n,
        p.theta_0pct.p,
        p.theta_100pct.n,
        p.theta_100pct.p,
        p.electrolyte_conductivity,
        p.ohmic_resistance,
        p.c_e_init,
        p.d_e,
        p.d_s.n,
        p.d_s.p,
        p.k_rate.n,
        p.k_rate.p,
        p.transference_number,
        p.temperature,
        model.config().dt,
        model.config().max_c_rate,
    ];
    for x in scalars {
        x.to_bits().hash(&mut h);
    }
    model.config().diffusion.state_len().hash(&mut h);
    for table in [&p.ocp.n, &p.ocp.p] {
        for (t, v) in table.points() {
            t.to_bits().hash(&mut h);
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Dischargeable capacity in Ah: full 1C CCCV charge from 0% SOC, then a
/// 1C discharge to 2.5 V. Cached per parameter set.
pub fn reference_capacity(model: &CellModel) -> Result<f64> {
    let key = model_key(model);
    if let Some(q) = capacity_cache().lock().expect("capacity cache").get(&key) {
        return Ok(*q);
    }
    let q = measure_capacity(model)?;
    capacity_cache().lock().expect("capacity cache").insert(key, q);
    Ok(q)
}

fn measure_capacity(model: &CellModel) -> Result<f64> {
    let mut state = model.init_state(0.0)?;
    run_protocol(model, &make_cccv(1.0, 4.2, 0.16)?, &mut state)?;
    let discharge = make_discharge(1.0, V_FLOOR)?;
    let samples = run_protocol(model, &discharge, &mut state)?;
    let dt = model.config().dt;
    Ok(samples.iter().skip(1).map(|s| -s.current * dt / 3600.0).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::mscc_default;

    fn pristine() -> (CellParameters, AgingParameterSet) {
        let p = CellParameters::reference();
        let a = p.aging();
        (p, a)
    }

    #[test]
    fn cccv_ends_below_cutoff() {
        let (p, a) = pristine();
        let tr = simulate_protocol(&p, &a, &make_cccv(1.0, 4.2, 0.16).unwrap(), 0.0, SimConfig::default()).unwrap();
        let last = tr.samples.last().unwrap();
        assert_eq!(last.mode, TraceMode::Cv);
        assert!(last.current <= 0.16);
        assert!(tr.samples.windows(2).all(|w| w[1].t > w[0].t));
        for s in tr.samples.iter().filter(|s| s.mode == TraceMode::Cv) {
            assert!((s.voltage - 4.2).abs() <= 1e-3);
        }
    }

    #[test]
    fn mscc_current_staircase() {
        let (p, a) = pristine();
        let tr = simulate_protocol(&p, &a, &mscc_default().unwrap(), 0.0, SimConfig::default()).unwrap();
        let mut cc_levels: Vec<f64> = Vec::new();
        for s in tr.samples.iter().filter(|s| s.mode == TraceMode::Cc) {
            if cc_levels.last() != Some(&s.current) {
                cc_levels.push(s.current);
            }
        }
        let expected: Vec<f64> = [2.0, 1.5, 1.0, 0.5].iter().map(|c| c * 3.35).collect();
        assert_eq!(cc_levels, expected);
        assert_eq!(tr.samples.last().unwrap().mode, TraceMode::Cv);
        assert!(tr.lithium_drift() < 1e-6);
    }

    #[test]
    fn reference_capacity_is_plausible_and_cached() {
        let (p, a) = pristine();
        let m = CellModel::new(&p, &a, SimConfig::default()).unwrap();
        let q = reference_capacity(&m).unwrap();
        assert!(q > 3.0 && q < 3.4, "{q}");
        assert_eq!(reference_capacity(&m).unwrap(), q);
        let aged = a.scaled(&[0.85, 0.85, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let m2 = CellModel::new(&p, &aged, SimConfig::default()).unwrap();
        assert!(reference_capacity(&m2).unwrap() < q);
    }
}
