//! Stand-ins for measured cells. Each oracle cell runs a finer, different
//! simulator configuration than the training corpus, carries manufacturing
//! offsets outside the seven aging parameters and fades along a trajectory
//! none of the presets produce, so a model trained on the corpus meets a
//! genuine domain gap.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{simulate_protocol, CellParameters, DiffusionKind, SimConfig};
use crate::datagen::{
    segment_trace, stream_rng, synth_fade_trajectory, FadeCoefficients, FadeKind, Normalization, SegmentRecord,
    SourceId, DEFAULT_DELTA_Q,
};
use crate::error::{Error, Result};
use crate::identify::AgingTrajectory;
use crate::protocol::Protocol;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCell {
    pub id: u32,
    pub base: CellParameters,
    pub fade: FadeCoefficients,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub sim: SimConfig,
    pub cycles: u32,
    /// Segments drawn per evaluated cycle, each from its own random start.
    pub segments_per_cycle: usize,
    pub soc0_max: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig {
                dt: 0.25,
                diffusion: DiffusionKind::FiniteVolume { nodes: 30 },
                ..SimConfig::default()
            },
            cycles: 60,
            segments_per_cycle: 5,
            soc0_max: 0.3,
            seed: 0,
        }
    }
}

/// Manufacturing offsets. Every oracle cell shares the lot-level shift and
/// adds a smaller per-cell one; cells past the table reuse it cyclically.
fn apply_offsets(p: &mut CellParameters, k: usize) {
    p.theta_100pct.n -= 0.012;
    p.theta_100pct.p += 0.008;
    p.electrolyte_conductivity *= 0.7;
    p.ohmic_resistance *= 1.3;
    match k % 3 {
        0 => p.c_e_init *= 0.9,
        1 => p.particle_radius.n *= 1.08,
        _ => p.electrode_thickness.sep *= 1.15,
    }
}

const FADES: [FadeCoefficients; 3] = [
    FadeCoefficients { a: 0.2, b: 1.1, c: 0.45, d: 0.8, e: 0.8, f: 1.2 },
    FadeCoefficients { a: 0.12, b: 0.7, c: 0.3, d: 1.5, e: 0.5, f: 0.8 },
    FadeCoefficients { a: 0.22, b: 1.6, c: 0.55, d: 1.0, e: 1.2, f: 2.0 },
];

pub fn oracle_cells(reference: &CellParameters, n: usize) -> Vec<OracleCell> {
    (0..n)
        .map(|k| {
            let mut base = reference.clone();
            apply_offsets(&mut base, k);
            OracleCell {
                id: k as u32,
                base,
                fade: FADES[k % 3],
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleData {
    /// Segment records; `source.cell` is the oracle id, `source.cycle` the cycle.
    pub records: Vec<SegmentRecord>,
    pub trajectories: Vec<(u32, AgingTrajectory)>,
}

impl OracleData {
    /// True capacity of `cell` at `cycle`.
    pub fn capacity(&self, cell: u32, cycle: u32) -> Option<f64> {
        let (_, t) = self.trajectories.iter().find(|(c, _)| *c == cell)?;
        t.entries.iter().find(|e| e.cycle == cycle).map(|e| e.capacity)
    }
}

/// Runs every oracle cell through its life, charging once per cycle with
/// `protocol` and drawing `segments_per_cycle` windows per charge.
pub fn simulate_oracle(cells: &[OracleCell], protocol: &Protocol, config: &OracleConfig, norm: &Normalization) -> Result<OracleData> {
    if cells.is_empty() {
        return Err(Error::invalid("no oracle cells"));
    }
    let trajectories: Vec<(u32, AgingTrajectory)> = cells
        .par_iter()
        .map(|c| {
            let seed = config.seed ^ (0x9e37_79b9 * (c.id as u64 + 1));
            synth_fade_trajectory(FadeKind::Custom(c.fade), config.cycles, &c.base, seed, config.sim).map(|t| (c.id, t))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(&OracleCell, u32, crate::cell::AgingParameterSet, f64)> = cells
        .iter()
        .zip(&trajectories)
        .flat_map(|(c, (_, t))| t.entries.iter().map(move |e| (c, e.cycle, e.aging, e.capacity)))
        .collect();
    let per_job: Vec<Result<Vec<SegmentRecord>>> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, (cell, cycle, aging, capacity))| {
            let mut rng = stream_rng(config.seed, 1_000_000 + j as u64);
            let soc0 = rng.random_range(0.0..=config.soc0_max);
            let tr = simulate_protocol(&cell.base, aging, protocol, soc0, config.sim)?;
            let src = SourceId {
                cell: cell.id,
                cycle: *cycle,
                set: u32::MAX,
            };
            // fine stride, then a random subset: starts are effectively arbitrary
            let all = segment_trace(&tr.samples, *capacity, src, DEFAULT_DELTA_Q, 0.01);
            let k = config.segments_per_cycle.min(all.len());
            let mut pick = index::sample(&mut rng, all.len(), k).into_vec();
            pick.sort_unstable();
            pick.into_iter().map(|i| SegmentRecord::from_segment(&all[i], norm)).collect()
        })
        .collect();
    let mut records = Vec::new();
    for r in per_job {
        records.extend(r?);
    }
    Ok(OracleData { records, trajectories })
}
