//! Single-particle cell model with electrolyte dynamics.
//!
//! Terminal voltage, charging positive:
//!
//! ```text
//! V = U_p(θ_s,p) − U_n(θ_s,n) + η_p − η_n + Δφ_e + I·(R0 + R_e)
//! η  = ±(2RT/F)·asinh(i / (2·j0)),   i = I / (a·L·A),   a = 3ε_s / R_p
//! j0 = F·k·c_e^½·c_s^½·(c_max − c_s)^½
//! Δφ_e = (2RT/F)·(1 − t+)·ln(c_e,p / c_e,n)
//! ```
//!
//! `R_e` is the ohmic drop through the electrolyte (see [`Electrolyte`]).
//! All linear subsystems advance with precomputed one-step maps, so a step
//! costs a handful of multiplies plus two table lookups.

use serde::{Deserialize, Serialize};

use super::diffusion::{DiffusionKind, SolidDiffusion};
use super::electrolyte::Electrolyte;
use super::params::{
    AgingParameterSet, CellParameters, Electrode, PerElectrode, FARADAY, GAS_CONSTANT, NOMINAL_CAPACITY_AH,
};
use crate::error::{Error, Result};

/// Tolerance on |V − v_target| for the CV current solvers, volts.
pub const CV_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Step length, seconds.
    pub dt: f64,
    pub diffusion: DiffusionKind,
    /// Largest current magnitude accepted by `step`, in C.
    pub max_c_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            diffusion: DiffusionKind::Pade,
            max_c_rate: 4.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.max_c_rate > 0.0) {
            return Err(Error::invalid("max_c_rate must be positive"));
        }
        if let DiffusionKind::FiniteVolume { nodes } = self.diffusion {
            if nodes < 3 {
                return Err(Error::invalid("finite-volume diffusion needs at least 3 nodes"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    /// Surface-deviation states of each particle, in stoichiometry units.
    pub solid: PerElectrode<Vec<f64>>,
    /// Electrolyte concentration deviations `[x_n, x_p]`, mol/m³.
    pub electrolyte: [f64; 2],
    pub theta_bulk: PerElectrode<f64>,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub voltage: f64,
    pub soc: f64,
}

#[derive(Debug, Clone)]
pub struct CellModel {
    params: CellParameters,
    aging: AgingParameterSet,
    config: SimConfig,
    solid: PerElectrode<SolidDiffusion>,
    electrolyte: Electrolyte,
    /// Bulk stoichiometry change per ampere-second.
    bulk_rate: PerElectrode<f64>,
    /// Reaction area `a·L·A` per electrode, m².
    reaction_area: PerElectrode<f64>,
    thermal: f64,
    current_limit: f64,
}

impl CellModel {
    /// Builds a model of `params` with the seven aging parameters replaced by `aging`.
    pub fn new(params: &CellParameters, aging: &AgingParameterSet, config: SimConfig) -> Result<Self> {
        config.validate()?;
        aging.validate()?;
        let params = params.with_aging(aging);
        params.validate()?;

        let area = params.plate_area;
        let l = PerElectrode::new(params.electrode_thickness.n, params.electrode_thickness.p);
        let reaction_area = PerElectrode::new(
            3.0 * params.active_vol_frac.n / params.particle_radius.n * l.n * area,
            3.0 * params.active_vol_frac.p / params.particle_radius.p * l.p * area,
        );
        // Charging inserts lithium into the anode and removes it from the cathode.
        let flux = PerElectrode::new(1.0 / (FARADAY * reaction_area.n), -1.0 / (FARADAY * reaction_area.p));
        let solid = PerElectrode::new(
            SolidDiffusion::new(
                config.diffusion,
                params.particle_radius.n,
                params.d_s.n,
                flux.n,
                params.c_max.n,
                config.dt,
            )?,
            SolidDiffusion::new(
                config.diffusion,
                params.particle_radius.p,
                params.d_s.p,
                flux.p,
                params.c_max.p,
                config.dt,
            )?,
        );
        let bulk_rate = PerElectrode::new(
            1.0 / (FARADAY * params.active_vol_frac.n * l.n * area * params.c_max.n),
            -1.0 / (FARADAY * params.active_vol_frac.p * l.p * area * params.c_max.p),
        );
        let electrolyte = Electrolyte::new(&params, config.dt);
        let thermal = 2.0 * GAS_CONSTANT * params.temperature / FARADAY;
        Ok(Self {
            aging: *aging,
            current_limit: config.max_c_rate * NOMINAL_CAPACITY_AH,
            params,
            config,
            solid,
            electrolyte,
            bulk_rate,
            reaction_area,
            thermal,
        })
    }

    /// Model of `params` as given, without an aging override.
    pub fn pristine(params: &CellParameters, config: SimConfig) -> Result<Self> {
        Self::new(params, &params.aging(), config)
    }

    /// Effective parameters, aging already applied.
    pub fn params(&self) -> &CellParameters {
        &self.params
    }

    pub fn aging(&self) -> &AgingParameterSet {
        &self.aging
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn electrolyte(&self) -> &Electrolyte {
        &self.electrolyte
    }

    pub fn ocv_at_soc(&self, soc: f64) -> Result<f64> {
        ocv_at_soc(&self.params, soc)
    }

    pub fn init_state(&self, soc0: f64) -> Result<CellState> {
        let (tn, tp) = stoichiometry_at_soc(&self.params, soc0)?;
        Ok(CellState {
            solid: PerElectrode::new(
                vec![0.0; self.solid.n.state_len()],
                vec![0.0; self.solid.p.state_len()],
            ),
            electrolyte: [0.0, 0.0],
            theta_bulk: PerElectrode::new(tn, tp),
            time: 0.0,
        })
    }

    /// Coulomb-counted SOC over the anode stoichiometric window.
    pub fn soc(&self, state: &CellState) -> f64 {
        let p = &self.params;
        (state.theta_bulk.n - p.theta_0pct.n) / (p.theta_100pct.n - p.theta_0pct.n)
    }

    /// Stored charge above the 0% anode stoichiometry as a fraction of the
    /// nominal capacity.
    pub fn nominal_soc(&self, state: &CellState) -> f64 {
        let q = self.params.electrode_capacity_full(Electrode::Negative);
        (state.theta_bulk.n - self.params.theta_0pct.n) * q / NOMINAL_CAPACITY_AH
    }

    pub fn surface_theta(&self, state: &CellState) -> PerElectrode<f64> {
        PerElectrode::new(
            state.theta_bulk.n + self.solid.n.surface_deviation(&state.solid.n),
            state.theta_bulk.p + self.solid.p.surface_deviation(&state.solid.p),
        )
    }

    /// Total lithium held in both solid phases, mol.
    pub fn total_lithium(&self, state: &CellState) -> f64 {
        let p = &self.params;
        p.plate_area
            * (p.active_vol_frac.n * p.electrode_thickness.n * p.c_max.n * state.theta_bulk.n
                + p.active_vol_frac.p * p.electrode_thickness.p * p.c_max.p * state.theta_bulk.p)
    }

    pub fn terminal_voltage(&self, state: &CellState, current: f64) -> Result<f64> {
        let ts = self.surface_theta(state);
        self.voltage_from(ts.n, ts.p, state.electrolyte[0], state.electrolyte[1], current)
    }

    fn voltage_from(&self, theta_n: f64, theta_p: f64, xe_n: f64, xe_p: f64, current: f64) -> Result<f64> {
        let p = &self.params;
        for (electrode, theta) in [(Electrode::Negative, theta_n), (Electrode::Positive, theta_p)] {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::SurfaceSaturation { electrode, theta });
            }
        }
        let ce_n = p.c_e_init + xe_n;
        let ce_p = p.c_e_init + xe_p;
        if !(ce_n > 0.0 && ce_p > 0.0) {
            return Err(Error::NonFinite("electrolyte concentration"));
        }
        let ocv = p.ocp.p.eval(theta_p) - p.ocp.n.eval(theta_n);
        let j0 = |k: f64, ce: f64, theta: f64, cmax: f64| {
            FARADAY * k * (ce * theta * cmax * (1.0 - theta) * cmax).sqrt()
        };
        let j0_n = j0(p.k_rate.n, ce_n, theta_n, p.c_max.n);
        let j0_p = j0(p.k_rate.p, ce_p, theta_p, p.c_max.p);
        let eta_n = -self.thermal * (current / self.reaction_area.n / (2.0 * j0_n)).asinh();
        let eta_p = self.thermal * (current / self.reaction_area.p / (2.0 * j0_p)).asinh();
        let dphi_e = self.thermal * (1.0 - p.transference_number) * (ce_p / ce_n).ln();
        let v = ocv + eta_p - eta_n + dphi_e + current * (p.ohmic_resistance + self.electrolyte.resistance);
        if !v.is_finite() {
            return Err(Error::NonFinite("terminal voltage"));
        }
        Ok(v)
    }

    fn check_current(&self, current: f64) -> Result<()> {
        if !current.is_finite() {
            return Err(Error::NonFinite("current"));
        }
        if current.abs() > self.current_limit * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "current {current:.3} A exceeds the {:.2} A guard",
                self.current_limit
            )));
        }
        Ok(())
    }

    /// Advances `state` by one step of constant `current` and returns the
    /// voltage at the end of the step.
    pub fn step(&self, state: &mut CellState, current: f64) -> Result<StepOutput> {
        self.check_current(current)?;
        let dt = self.config.dt;
        state.theta_bulk.n += self.bulk_rate.n * current * dt;
        state.theta_bulk.p += self.bulk_rate.p * current * dt;
        self.solid.n.step(&mut state.solid.n, current);
        self.solid.p.step(&mut state.solid.p, current);
        let delta = self
            .electrolyte
            .step(state.electrolyte[1] - state.electrolyte[0], current);
        let (xn, xp) = self.electrolyte.split(delta);
        state.electrolyte = [xn, xp];
        state.time += dt;
        let voltage = self.terminal_voltage(state, current)?;
        Ok(StepOutput {
            voltage,
            soc: self.soc(state),
        })
    }

    /// Current at which the instantaneous terminal voltage of `state` equals
    /// `v_target`. Returns 0 when the cell already sits at or above the target.
    pub fn solve_cv_current(&self, state: &CellState, v_target: f64) -> Result<f64> {
        let ts = self.surface_theta(state);
        let [xn, xp] = state.electrolyte;
        self.solve_monotone(v_target, |i| self.voltage_from(ts.n, ts.p, xn, xp, i))
    }

    /// Current that, held for one step, brings the end-of-step voltage to
    /// `v_target`. This is what the simulator uses during CV holds so every
    /// recorded CV sample sits on the target.
    pub fn solve_cv_step_current(&self, state: &CellState, v_target: f64) -> Result<f64> {
        let dt = self.config.dt;
        let (an, bn) = self.solid.n.preview(&state.solid.n);
        let (ap, bp) = self.solid.p.preview(&state.solid.p);
        let (ae, be) = self.electrolyte.preview(state.electrolyte[1] - state.electrolyte[0]);
        let tb = state.theta_bulk;
        self.solve_monotone(v_target, |i| {
            let tn = tb.n + self.bulk_rate.n * i * dt + an + bn * i;
            let tp = tb.p + self.bulk_rate.p * i * dt + ap + bp * i;
            let (xn, xp) = self.electrolyte.split(ae + be * i);
            self.voltage_from(tn, tp, xn, xp, i)
        })
    }

    /// Root of `v(i) = v_target` on `[0, current_limit]` for `v` increasing in `i`.
    /// Evaluation failures at large currents count as overshoot.
    fn solve_monotone(&self, v_target: f64, v: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        let f = |i: f64| -> Result<f64> {
            match v(i) {
                Ok(x) => Ok(x - v_target),
                Err(Error::SurfaceSaturation { .. }) if i > 0.0 => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        };
        let f0 = f(0.0)?;
        if f0 >= -CV_TOLERANCE {
            return Ok(0.0);
        }
        let mut hi = self.current_limit;
        let mut f_hi = f(hi)?;
        if f_hi < 0.0 {
            return Err(Error::NoRoot { v_target });
        }
        let (mut lo, mut f_lo) = (0.0, f0);
        // Illinois variant of regula falsi, bisecting whenever the secant
        // point is unusable.
        let mut side = 0i8;
        for _ in 0..200 {
            let mut x = if f_hi.is_finite() {
                (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
            } else {
                0.5 * (lo + hi)
            };
            if !(x > lo && x < hi) {
                x = 0.5 * (lo + hi);
            }
            let fx = f(x)?;
            if fx.abs() <= CV_TOLERANCE || hi - lo < 1e-12 {
                return Ok(x);
            }
            if fx < 0.0 {
                lo = x;
                f_lo = fx;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = x;
                f_hi = fx;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn stoichiometry_at_soc(params: &CellParameters, soc: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&soc) {
        return Err(Error::invalid(format!("soc must lie in [0, 1], got {soc}")));
    }
    let tn = params.theta_0pct.n + soc * (params.theta_100pct.n - params.theta_0pct.n);
    let tp = params.theta_0pct.p - soc * (params.theta_0pct.p - params.theta_100pct.p);
    Ok((tn, tp))
}

/// Open-circuit voltage at `soc` under the linear stoichiometry mapping.
pub fn ocv_at_soc(params: &CellParameters, soc: f64) -> Result<f64> {
    let (tn, tp) = stoichiometry_at_soc(params, soc)?;
    Ok(params.ocp.p.eval(tp) - params.ocp.n.eval(tn))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CellModel {
        CellModel::pristine(&CellParameters::reference(), SimConfig::default()).unwrap()
    }

    #[test]
    fn ocv_window_and_monotonicity() {
        let p = CellParameters::reference();
        let top = ocv_at_soc(&p, 1.0).unwrap();
        let bottom = ocv_at_soc(&p, 0.0).unwrap();
        assert!((4.15..=4.25).contains(&top), "{top}");
        assert!((2.4..=3.1).contains(&bottom), "{bottom}");
        let grid: Vec<f64> = (0..=200).map(|i| ocv_at_soc(&p, i as f64 / 200.0).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
        assert!(ocv_at_soc(&p, 1.01).is_err());
    }

    #[test]
    fn init_state_boundaries() {
        let m = model();
        let p = m.params().clone();
        assert_eq!(m.init_state(0.0).unwrap().theta_bulk.n, p.theta_0pct.n);
        assert!((m.init_state(1.0).unwrap().theta_bulk.p - p.theta_100pct.p).abs() < 1e-15);
        let s = m.init_state(0.5).unwrap();
        let v = m.terminal_voltage(&s, 0.0).unwrap();
        assert!((v - m.ocv_at_soc(0.5).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn zero_current_is_identity() {
        let m = model();
        let s0 = m.init_state(0.37).unwrap();
        let mut s = s0.clone();
        for _ in 0..100 {
            m.step(&mut s, 0.0).unwrap();
        }
        assert_eq!(s.solid, s0.solid);
        assert_eq!(s.theta_bulk, s0.theta_bulk);
        assert_eq!(s.electrolyte, s0.electrolyte);
    }

    #[test]
    fn charging_raises_voltage_and_ohmic_term_is_additive() {
        let m = model();
        let s = m.init_state(0.4).unwrap();
        let ocv = m.terminal_voltage(&s, 0.0).unwrap();
        assert!(m.terminal_voltage(&s, 3.35).unwrap() > ocv);
        let mut p = CellParameters::reference();
        let mut aging = p.aging();
        aging.r0 *= 2.0;
        let m2 = CellModel::new(&p, &aging, SimConfig::default()).unwrap();
        let dv = m2.terminal_voltage(&s, 3.35).unwrap() - m.terminal_voltage(&s, 3.35).unwrap();
        assert!((dv - 3.35 * p.ohmic_resistance).abs() < 1e-12);
        p.ohmic_resistance = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn coulomb_counting_at_one_c() {
        let m = model();
        let mut s = m.init_state(0.0).unwrap();
        let q = m.params().capacity(Electrode::Negative);
        let steps = (0.6 * q / NOMINAL_CAPACITY_AH * 3600.0).round() as usize;
        let mut out = None;
        for _ in 0..steps {
            out = Some(m.step(&mut s, NOMINAL_CAPACITY_AH).unwrap());
        }
        assert!((out.unwrap().soc - 0.6).abs() < 0.005);
    }

    #[test]
    fn lithium_is_conserved() {
        let m = model();
        let mut s = m.init_state(0.1).unwrap();
        let li0 = m.total_lithium(&s);
        for k in 0..3000 {
            m.step(&mut s, if k < 2000 { 5.0 } else { -2.0 }).unwrap();
        }
        assert!(((m.total_lithium(&s) - li0) / li0).abs() < 1e-12);
    }

    #[test]
    fn cv_solvers_hit_target() {
        let m = model();
        let mut s = m.init_state(0.8).unwrap();
        for _ in 0..60 {
            m.step(&mut s, 3.35).unwrap();
        }
        let target = m.terminal_voltage(&s, 3.0).unwrap();
        let i = m.solve_cv_current(&s, target).unwrap();
        assert!((i - 3.0).abs() < 1e-4, "{i}");
        assert!((m.terminal_voltage(&s, i).unwrap() - target).abs() < 1e-4);

        let target = m.step(&mut s.clone(), 2.0).unwrap().voltage;
        let i = m.solve_cv_step_current(&s, target).unwrap();
        let out = m.step(&mut s.clone(), i).unwrap();
        assert!((out.voltage - target).abs() < 1e-4);
        assert!((i - 2.0).abs() < 1e-4, "{i}");
        assert!(matches!(m.solve_cv_current(&s, 4.25), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn cv_at_equilibrium_target_gives_zero() {
        let m = model();
        let s = m.init_state(0.5).unwrap();
        let ocv = m.terminal_voltage(&s, 0.0).unwrap();
        assert!(m.solve_cv_current(&s, ocv).unwrap().abs() < 1e-6);
        assert!(m.solve_cv_current(&s, ocv - 0.1).unwrap() == 0.0);
    }

    #[test]
    fn current_guard() {
        let m = model();
        let mut s = m.init_state(0.5).unwrap();
        assert!(m.step(&mut s, 14.0).is_err());
        assert!(m.step(&mut s, f64::NAN).is_err());
    }
}
