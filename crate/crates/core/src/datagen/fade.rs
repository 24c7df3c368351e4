use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cell::{reference_capacity, CellModel, CellParameters, SimConfig, NOMINAL_CAPACITY_AH};
use crate::error::{Error, Result};
use crate::identify::AgingTrajectory;

/// Relative std of the per-entry parameter jitter.
const JITTER: f64 = 5e-4;

/// Power-law fade with x = cycle / last cycle:
/// ε_s × (1 − a·x^b), D_s and k × (1 − c·x^d), R0 × (1 + e·x^f).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadeCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl FadeCoefficients {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.a, self.c].iter().all(|v| (0.0..1.0).contains(v))
            && self.e >= 0.0
            && [self.b, self.d, self.f].iter().all(|v| *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid fade coefficients {self:?}")))
        }
    }

    /// Multipliers at life fraction `x`, in aging-set order.
    pub fn factors(&self, x: f64) -> [f64; 7] {
        let eps = 1.0 - self.a * x.powf(self.b);
        let kin = 1.0 - self.c * x.powf(self.d);
        let r = 1.0 + self.e * x.powf(self.f);
        [eps, eps, kin, kin, kin, kin, r]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadeKind {
    Mild,
    Moderate,
    Severe,
    Custom(FadeCoefficients),
}

impl FadeKind {
    pub fn coefficients(&self) -> FadeCoefficients {
        match *self {
            FadeKind::Mild => FadeCoefficients { a: 0.08, b: 1.0, c: 0.2, d: 1.0, e: 0.3, f: 1.0 },
            FadeKind::Moderate => FadeCoefficients { a: 0.15, b: 0.9, c: 0.35, d: 1.0, e: 0.6, f: 1.0 },
            FadeKind::Severe => FadeCoefficients { a: 0.26, b: 1.3, c: 0.5, d: 1.2, e: 1.0, f: 1.5 },
            FadeKind::Custom(c) => c,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mild" => Ok(FadeKind::Mild),
            "moderate" => Ok(FadeKind::Moderate),
            "severe" => Ok(FadeKind::Severe),
            _ => Err(Error::invalid(format!("unknown fade preset `{name}` (mild, moderate, severe)"))),
        }
    }
}

/// A smooth synthetic aging trajectory over cycles `0..n_cycles`. Entry 0
/// is the pristine base; later entries carry small seeded jitter. The
/// trajectory stops early once capacity falls below half of nominal.
pub fn synth_fade_trajectory(
    kind: FadeKind,
    n_cycles: u32,
    base: &CellParameters,
    seed: u64,
    sim: SimConfig,
) -> Result<AgingTrajectory> {
    if n_cycles < 10 {
        return Err(Error::invalid("fade trajectories need at least 10 cycles"));
    }
    let coeffs = kind.coefficients();
    coeffs.validate()?;
    let pristine = base.aging();
    let mut rng = super::stream_rng(seed, 0);
    let jitter = Normal::new(1.0, JITTER).expect("constant std");
    let mut traj = AgingTrajectory::default();
    let last = (n_cycles - 1) as f64;
    for n in 0..n_cycles {
        let mut f = coeffs.factors(n as f64 / last);
        if n > 0 {
            for x in &mut f {
                *x *= jitter.sample(&mut rng);
            }
        }
        let aging = pristine.scaled(&f);
        let q = match CellModel::new(base, &aging, sim).and_then(|m| reference_capacity(&m)) {
            Ok(q) if q >= 0.5 * NOMINAL_CAPACITY_AH => q,
            Ok(_) => break,
            Err(e) => {
                log::warn!("fade trajectory truncated at cycle {n}: {e}");
                break;
            }
        };
        traj.push(n, aging, q)?;
    }
    Ok(traj)
}
