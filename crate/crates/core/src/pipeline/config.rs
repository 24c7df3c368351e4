use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell::{CellParameters, OcpTable, PerElectrode, SimConfig};
use crate::datagen::{Normalization, DEFAULT_STRIDE_Q};
use crate::error::{Error, Result};
use crate::net::{TrainingConfig, TransferConfig};
use crate::protocol::Protocol;

use super::oracle::OracleConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Cell parameter file; the bundled reference cell when absent.
    pub params: Option<PathBuf>,
    /// OCP tables overriding whatever the parameter file names.
    pub ocp_n: Option<PathBuf>,
    pub ocp_p: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            params: None,
            ocp_n: None,
            ocp_p: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scale {
    pub trajectories: usize,
    pub cycles: u32,
    pub draws_per_mean: usize,
    pub corpus_cap: usize,
    pub target_cells: usize,
    pub stride_q: f64,
}

impl Default for Scale {
    fn default() -> Self {
        Self {
            trajectories: 6,
            cycles: 60,
            draws_per_mean: 30,
            corpus_cap: 50_000,
            target_cells: 3,
            stride_q: DEFAULT_STRIDE_Q,
        }
    }
}

/// How the "real" segments for one transfer run are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    /// Total segments, split evenly over the source cells.
    pub segments: usize,
    /// Overrides the transfer epoch count.
    pub epochs: Option<usize>,
    /// Cells that contribute segments; all target cells when absent.
    pub source_cells: Option<Vec<u32>>,
    /// Draw only from cycles below this one.
    pub early_life_cycles: Option<u32>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            id: "default".into(),
            segments: 45,
            epochs: None,
            source_cells: None,
            early_life_cycles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub scale: Scale,
    /// Master seed. Every stage derives its own stream from it, so the
    /// seeds inside `training`, `transfer` and `oracle` are overwritten.
    pub seed: u64,
    /// Preset name or protocol file.
    pub protocol: String,
    pub sim: SimConfig,
    pub norm: Normalization,
    pub training: TrainingConfig,
    pub transfer: TransferConfig,
    pub oracle: OracleConfig,
    pub scenario: Scenario,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            scale: Scale::default(),
            seed: 0,
            protocol: "mscc-paper".into(),
            sim: SimConfig::default(),
            norm: Normalization::default(),
            training: TrainingConfig::default(),
            transfer: TransferConfig::default(),
            oracle: OracleConfig::default(),
            scenario: Scenario::default(),
        }
    }
}

/// Everything a validated config resolves to.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: CellParameters,
    pub protocol: Protocol,
}

impl PipelineConfig {
    /// Two trajectories of 20 cycles, two draws per mean and a 2,000-segment
    /// cap. Transfer and oracle shrink to match.
    pub fn smoke() -> Self {
        let mut c = Self::default();
        c.scale = Scale {
            trajectories: 2,
            cycles: 20,
            draws_per_mean: 2,
            corpus_cap: 2_000,
            ..Scale::default()
        };
        c.training.batch_size = 64;
        c.transfer.real_target = 500;
        c.transfer.sim_samples = 2_000;
        c.transfer.training.batch_size = 64;
        c.oracle.cycles = 20;
        c.oracle.sim.dt = 0.5;
        c.oracle.segments_per_cycle = 3;
        c.scenario.segments = 15;
        c
    }

    /// Parses a possibly partial config. Keys are merged into the defaults
    /// table by table, so `[transfer.training]` with one key keeps the other
    /// transfer defaults rather than those of a bare `TrainingConfig`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::Validation(format!("config: {e}"));
        let user: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| bad(&e))?;
        merge(&mut merged, user);
        merged.try_into().map_err(|e| bad(&e))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form. The output directory is not
    /// part of the experiment and is left out.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.paths.out = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        crate::datagen::hex(&Sha256::digest(bytes))
    }

    /// Checks every knob and loads the referenced files. Writes nothing.
    pub fn validate(&self) -> Result<Resolved> {
        let bad = |m: String| Err(Error::Validation(m));
        let s = &self.scale;
        if s.trajectories == 0 || s.draws_per_mean == 0 || s.corpus_cap == 0 || s.target_cells == 0 {
            return bad("scale knobs must be positive".into());
        }
        if s.cycles < 10 || self.oracle.cycles < 10 {
            return bad("trajectories need at least 10 cycles".into());
        }
        if !(s.stride_q > 0.0) {
            return bad("stride_q must be positive".into());
        }
        if self.scenario.segments == 0 || self.transfer.real_target == 0 || self.oracle.segments_per_cycle == 0 {
            return bad("segment counts must be positive".into());
        }
        if self.scenario.epochs == Some(0) {
            return bad("scenario epochs must be positive".into());
        }
        for p in [&self.paths.params, &self.paths.ocp_n, &self.paths.ocp_p].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("missing file {}", p.display()));
            }
        }
        let wrap = |e: Error| Error::Validation(e.to_string());
        self.training.validate().map_err(wrap)?;
        self.transfer.training.validate().map_err(wrap)?;
        self.sim.validate().map_err(wrap)?;
        self.oracle.sim.validate().map_err(wrap)?;
        let mut params = match &self.paths.params {
            Some(p) => CellParameters::from_path(p).map_err(wrap)?,
            None => CellParameters::reference(),
        };
        let ocp_n = self.paths.ocp_n.as_deref().map(OcpTable::from_path).transpose().map_err(wrap)?;
        let ocp_p = self.paths.ocp_p.as_deref().map(OcpTable::from_path).transpose().map_err(wrap)?;
        params.ocp = PerElectrode::new(
            ocp_n.unwrap_or_else(|| params.ocp.n.clone()),
            ocp_p.unwrap_or_else(|| params.ocp.p.clone()),
        );
        params.validate().map_err(wrap)?;
        let protocol = if Path::new(&self.protocol).is_file() {
            Protocol::from_path(Path::new(&self.protocol))
        } else {
            Protocol::preset(&self.protocol)
        }
        .map_err(wrap)?;
        Ok(Resolved { params, protocol })
    }
}

/// Overlays `user` on `base`. A table carrying an enum tag (`kind`) is a
/// different variant, not a patch, and replaces the default outright.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if !u.contains_key("kind") => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_keeps_digest() {
        let c = PipelineConfig::smoke();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        assert_ne!(PipelineConfig::default().digest(), c.digest());
        let mut moved = c.clone();
        moved.paths.out = "elsewhere".into();
        assert_eq!(moved.digest(), c.digest());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = PipelineConfig::from_toml("seed = 9\n[scale]\ncycles = 12\n").unwrap();
        assert_eq!((c.seed, c.scale.cycles, c.scale.trajectories), (9, 12, 6));
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml("[scale]\nbogus = 1").is_err());
    }

    #[test]
    fn nested_tables_patch_their_own_defaults() {
        let d = PipelineConfig::default();
        let c = PipelineConfig::from_toml("[transfer.training]\nbatch_size = 8\n[oracle.sim]\ndt = 0.5\n").unwrap();
        assert_eq!(c.transfer.training.batch_size, 8);
        assert_eq!(c.transfer.training.lr_init, d.transfer.training.lr_init);
        assert_eq!(c.transfer.training.max_epochs, d.transfer.training.max_epochs);
        assert_eq!(c.oracle.sim.diffusion, d.oracle.sim.diffusion);
        let p = PipelineConfig::from_toml("[oracle.sim.diffusion]\nkind = \"pade\"\n").unwrap();
        assert_eq!(p.oracle.sim.diffusion, crate::cell::DiffusionKind::Pade);
    }

    #[test]
    fn validation_catches_bad_knobs() {
        let mut c = PipelineConfig::smoke();
        c.scale.draws_per_mean = 0;
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
        let mut c = PipelineConfig::smoke();
        c.protocol = "nope".into();
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
        assert!(PipelineConfig::smoke().validate().is_ok());
    }
}
