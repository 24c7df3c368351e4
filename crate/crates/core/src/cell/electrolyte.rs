//! Two-region electrolyte concentration model.
//!
//! Each electrode region carries one lumped concentration deviation from
//! `c_e,0`. Salt is conserved, `V_n·x_n + V_p·x_p = 0`, so the pair has a
//! single dynamic mode: the difference `δ = x_p − x_n` relaxes towards
//! `R_d·(1 − t+)·I/(F·A)` with time constant `R_d·V_n·V_p/(V_n + V_p)`.
//! `R_d` is the diffusion resistance across the cell built from quadratic
//! in-electrode profiles (`L/(3·D_eff)`) and a linear separator profile;
//! effective properties use a Bruggeman exponent of 1.5.

use super::params::{CellParameters, FARADAY};

pub const BRUGGEMAN: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct Electrolyte {
    decay: f64,
    input: f64,
    /// Region volumes per unit plate area, `ε_e·L`.
    volume_n: f64,
    volume_p: f64,
    pub time_constant: f64,
    /// Ohmic resistance of the electrolyte path, ohms.
    pub resistance: f64,
}

impl Electrolyte {
    pub fn new(params: &CellParameters, dt: f64) -> Self {
        let l = params.electrode_thickness;
        let eps = params.electrolyte_vol_frac;
        let d_eff = |e: f64| params.d_e * e.powf(BRUGGEMAN);
        let k_eff = |e: f64| params.electrolyte_conductivity * e.powf(BRUGGEMAN);

        let r_diff = l.n / (3.0 * d_eff(eps.n)) + l.sep / d_eff(eps.sep) + l.p / (3.0 * d_eff(eps.p));
        let volume_n = eps.n * l.n;
        let volume_p = eps.p * l.p;
        let time_constant = r_diff * volume_n * volume_p / (volume_n + volume_p);
        let decay = (-dt / time_constant).exp();
        let input = (1.0 - decay) * r_diff * (1.0 - params.transference_number) / (FARADAY * params.plate_area);
        let resistance =
            (l.n / (3.0 * k_eff(eps.n)) + l.sep / k_eff(eps.sep) + l.p / (3.0 * k_eff(eps.p))) / params.plate_area;
        Self {
            decay,
            input,
            volume_n,
            volume_p,
            time_constant,
            resistance,
        }
    }

    pub fn step(&self, delta: f64, current: f64) -> f64 {
        self.decay * delta + self.input * current
    }

    /// `(a, b)` with the post-step mode equal to `a + b·I`.
    pub fn preview(&self, delta: f64) -> (f64, f64) {
        (self.decay * delta, self.input)
    }

    /// Region concentration deviations `(x_n, x_p)` in mol/m³.
    pub fn split(&self, delta: f64) -> (f64, f64) {
        let total = self.volume_n + self.volume_p;
        (-self.volume_p * delta / total, self.volume_n * delta / total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn salt_is_conserved() {
        let e = Electrolyte::new(&CellParameters::reference(), 1.0);
        let mut d = 0.0;
        for k in 0..200 {
            d = e.step(d, if k < 120 { 6.7 } else { -3.0 });
            let (xn, xp) = e.split(d);
            assert!((e.volume_n * xn + e.volume_p * xp).abs() < 1e-18);
        }
    }

    #[test]
    fn reference_resistance_and_steady_state() {
        let p = CellParameters::reference();
        let e = Electrolyte::new(&p, 1.0);
        // Hand-evaluated series resistance of the three layers.
        let k = |eps: f64| 0.963 * eps.powf(1.5);
        let r = (7.5e-5 / (3.0 * k(0.31)) + 1.2e-5 / k(0.45) + 8.5e-5 / (3.0 * k(0.26))) / 0.0802;
        assert!((e.resistance - r).abs() < 1e-15);
        assert!(e.resistance > 4e-3 && e.resistance < 7e-3);
        let mut d = 0.0;
        for _ in 0..100_000 {
            d = e.step(d, 3.35);
        }
        let dm = |eps: f64| 1e-9 * eps.powf(1.5);
        let rd = 7.5e-5 / (3.0 * dm(0.31)) + 1.2e-5 / dm(0.45) + 8.5e-5 / (3.0 * dm(0.26));
        assert!((d - rd * 0.637 * 3.35 / (FARADAY * 0.0802)).abs() < 1e-9);
        assert!(d > 0.0, "charging enriches the positive side");
    }
}
