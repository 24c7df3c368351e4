//! Cell parameter sets and the seven-parameter aging overlay.
//!
//! # Parameter file
//!
//! Parameter sets are stored as flat `key = value` text (TOML syntax). Keys
//! mirror the field names below with an `_n`, `_sep` or `_p` suffix for the
//! per-region quantities. Units are SI throughout:
//!
//! ```text
//! electrode_thickness_n = 7.5e-5        # m
//! electrode_thickness_sep = 1.2e-5      # m
//! electrode_thickness_p = 8.5e-5        # m
//! plate_area = 0.0802                   # m^2
//! particle_radius_n = 5.22e-6           # m
//! particle_radius_p = 5.86e-6           # m
//! electrolyte_vol_frac_n = 0.31
//! electrolyte_vol_frac_sep = 0.45
//! electrolyte_vol_frac_p = 0.26
//! active_vol_frac_n = 0.4882
//! active_vol_frac_p = 0.6053
//! c_max_n = 58114.0                     # mol/m^3
//! c_max_p = 44871.0                     # mol/m^3
//! theta_0pct_n = 0.0214
//! theta_0pct_p = 0.9377
//! theta_100pct_n = 0.7174
//! theta_100pct_p = 0.2717
//! electrolyte_conductivity = 0.963      # S/m
//! ohmic_resistance = 1.501e-3           # ohm
//! c_e_init = 1000.0                     # mol/m^3
//! d_e = 1e-9                            # m^2/s
//! d_s_n = 2.787e-14                     # m^2/s
//! d_s_p = 2.2006e-14                    # m^2/s
//! k_rate_n = 1.5428e-3                  # m^2.5/(mol^0.5 s)
//! k_rate_p = 2.3284e-6                  # m^2.5/(mol^0.5 s)
//! transference_number = 0.363
//! temperature = 298.15                  # K
//! ocp_n = "graphite.csv"                # optional, relative to this file
//! ocp_p = "nca.csv"                     # optional
//! ```
//!
//! Omitted `ocp_*` keys fall back to the bundled reference curves.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ocp::OcpTable;
use crate::error::{Error, Result};

pub const FARADAY: f64 = 96_485.332_12;
pub const GAS_CONSTANT: f64 = 8.314_462_618;
/// Rated capacity used for C-rates and SOH labels.
pub const NOMINAL_CAPACITY_AH: f64 = 3.35;
/// Relative disagreement between the two electrode capacities that triggers a warning.
pub const CAPACITY_CONSISTENCY_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Electrode {
    #[serde(alias = "anode")]
    Negative,
    #[serde(alias = "cathode")]
    Positive,
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Electrode::Negative => "anode",
            Electrode::Positive => "cathode",
        })
    }
}

/// A quantity defined for each electrode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerElectrode<T> {
    pub n: T,
    pub p: T,
}

impl<T> PerElectrode<T> {
    pub fn new(n: T, p: T) -> Self {
        Self { n, p }
    }

    pub fn get(&self, e: Electrode) -> &T {
        match e {
            Electrode::Negative => &self.n,
            Electrode::Positive => &self.p,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Electrode, &T) -> U) -> PerElectrode<U> {
        PerElectrode {
            n: f(Electrode::Negative, &self.n),
            p: f(Electrode::Positive, &self.p),
        }
    }
}

/// A quantity defined for anode, separator and cathode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layers {
    pub n: f64,
    pub sep: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParameters {
    pub electrode_thickness: Layers,
    pub plate_area: f64,
    pub particle_radius: PerElectrode<f64>,
    pub electrolyte_vol_frac: Layers,
    pub active_vol_frac: PerElectrode<f64>,
    pub c_max: PerElectrode<f64>,
    pub theta_0pct: PerElectrode<f64>,
    pub theta_100pct: PerElectrode<f64>,
    pub electrolyte_conductivity: f64,
    pub ohmic_resistance: f64,
    pub c_e_init: f64,
    pub d_e: f64,
    pub d_s: PerElectrode<f64>,
    pub k_rate: PerElectrode<f64>,
    pub transference_number: f64,
    pub temperature: f64,
    pub ocp: PerElectrode<OcpTable>,
}

impl CellParameters {
    /// Identified parameter set of the 3.35 Ah reference cell, with the
    /// bundled reference OCP curves.
    pub fn reference() -> Self {
        Self {
            electrode_thickness: Layers {
                n: 7.5e-5,
                sep: 1.2e-5,
                p: 8.5e-5,
            },
            plate_area: 0.0802,
            particle_radius: PerElectrode::new(5.22e-6, 5.86e-6),
            electrolyte_vol_frac: Layers {
                n: 0.31,
                sep: 0.45,
                p: 0.26,
            },
            active_vol_frac: PerElectrode::new(0.4882, 0.6053),
            c_max: PerElectrode::new(58114.0, 44871.0),
            theta_0pct: PerElectrode::new(0.0214, 0.9377),
            theta_100pct: PerElectrode::new(0.7174, 0.2717),
            electrolyte_conductivity: 0.963,
            ohmic_resistance: 1.501e-3,
            c_e_init: 1000.0,
            d_e: 1e-9,
            d_s: PerElectrode::new(2.787e-14, 2.2006e-14),
            k_rate: PerElectrode::new(1.5428e-3, 2.3284e-6),
            transference_number: 0.363,
            temperature: 298.15,
            ocp: PerElectrode::new(OcpTable::reference_negative(), OcpTable::reference_positive()),
        }
    }

    /// Checks the type invariants. Returns warnings for soft violations
    /// (currently only the cross-electrode capacity disagreement).
    pub fn validate(&self) -> Result<Vec<String>> {
        let positive = [
            ("electrode_thickness_n", self.electrode_thickness.n),
            ("electrode_thickness_sep", self.electrode_thickness.sep),
            ("electrode_thickness_p", self.electrode_thickness.p),
            ("plate_area", self.plate_area),
            ("particle_radius_n", self.particle_radius.n),
            ("particle_radius_p", self.particle_radius.p),
            ("c_max_n", self.c_max.n),
            ("c_max_p", self.c_max.p),
            ("electrolyte_conductivity", self.electrolyte_conductivity),
            ("ohmic_resistance", self.ohmic_resistance),
            ("c_e_init", self.c_e_init),
            ("d_e", self.d_e),
            ("d_s_n", self.d_s.n),
            ("d_s_p", self.d_s.p),
            ("k_rate_n", self.k_rate.n),
            ("k_rate_p", self.k_rate.p),
            ("transference_number", self.transference_number),
            ("temperature", self.temperature),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let fractions = [
            ("electrolyte_vol_frac_n", self.electrolyte_vol_frac.n),
            ("electrolyte_vol_frac_sep", self.electrolyte_vol_frac.sep),
            ("electrolyte_vol_frac_p", self.electrolyte_vol_frac.p),
            ("active_vol_frac_n", self.active_vol_frac.n),
            ("active_vol_frac_p", self.active_vol_frac.p),
            ("transference_number", self.transference_number),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        for (name, v) in [
            ("theta_0pct_n", self.theta_0pct.n),
            ("theta_0pct_p", self.theta_0pct.p),
            ("theta_100pct_n", self.theta_100pct.n),
            ("theta_100pct_p", self.theta_100pct.p),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.theta_100pct.n <= self.theta_0pct.n {
            return Err(Error::invalid("theta_100pct_n must exceed theta_0pct_n"));
        }
        if self.theta_100pct.p >= self.theta_0pct.p {
            return Err(Error::invalid("theta_100pct_p must be below theta_0pct_p"));
        }

        let mut warnings = Vec::new();
        let qn = self.capacity(Electrode::Negative);
        let qp = self.capacity(Electrode::Positive);
        let mismatch = (qn - qp).abs() / qn.max(qp);
        if mismatch > CAPACITY_CONSISTENCY_TOL {
            warnings.push(format!(
                "electrode capacities disagree by {:.1}% (anode {qn:.3} Ah, cathode {qp:.3} Ah)",
                100.0 * mismatch
            ));
        }
        Ok(warnings)
    }

    /// Usable capacity of one electrode over its stoichiometric window, in Ah.
    pub fn capacity(&self, side: Electrode) -> f64 {
        compute_capacity(self, side)
    }

    /// Capacity of the electrode over the full 0..1 stoichiometry range, in Ah.
    pub fn electrode_capacity_full(&self, side: Electrode) -> f64 {
        let (l, eps, cmax) = match side {
            Electrode::Negative => (self.electrode_thickness.n, self.active_vol_frac.n, self.c_max.n),
            Electrode::Positive => (self.electrode_thickness.p, self.active_vol_frac.p, self.c_max.p),
        };
        self.plate_area * FARADAY * l * eps * cmax / 3600.0
    }

    /// Returns a copy with the seven aging parameters overridden.
    pub fn with_aging(&self, aging: &AgingParameterSet) -> Self {
        let mut p = self.clone();
        p.active_vol_frac = PerElectrode::new(aging.eps_s_n, aging.eps_s_p);
        p.d_s = PerElectrode::new(aging.d_s_n, aging.d_s_p);
        p.k_rate = PerElectrode::new(aging.k_n, aging.k_p);
        p.ohmic_resistance = aging.r0;
        p
    }

    /// The seven aging parameters as currently set in this parameter set.
    pub fn aging(&self) -> AgingParameterSet {
        AgingParameterSet {
            eps_s_p: self.active_vol_frac.p,
            eps_s_n: self.active_vol_frac.n,
            d_s_p: self.d_s.p,
            d_s_n: self.d_s.n,
            k_p: self.k_rate.p,
            k_n: self.k_rate.n,
            r0: self.ohmic_resistance,
        }
    }

    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: ParameterFile =
            toml::from_str(text).map_err(|e| Error::format("parameter file", e.to_string()))?;
        let load = |rel: &Option<String>, fallback: fn() -> OcpTable| -> Result<OcpTable> {
            match rel {
                None => Ok(fallback()),
                Some(rel) => {
                    let path = match base_dir {
                        Some(dir) => dir.join(rel),
                        None => rel.into(),
                    };
                    OcpTable::from_path(&path)
                }
            }
        };
        let ocp = PerElectrode::new(
            load(&file.ocp_n, OcpTable::reference_negative)?,
            load(&file.ocp_p, OcpTable::reference_positive)?,
        );
        let params = file.into_params(ocp);
        for w in params.validate()? {
            log::warn!("{w}");
        }
        Ok(params)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    /// Serializes the scalar parameters. OCP tables are not embedded; the
    /// optional paths are written verbatim when given.
    pub fn to_toml(&self, ocp_n: Option<&str>, ocp_p: Option<&str>) -> String {
        let file = ParameterFile::from_params(self, ocp_n, ocp_p);
        toml::to_string(&file).expect("flat parameter file serializes")
    }
}

/// Usable capacity of one electrode, `A·F·L·ε·|Δθ|·c_max / 3600`, in Ah.
pub fn compute_capacity(params: &CellParameters, side: Electrode) -> f64 {
    let window = match side {
        Electrode::Negative => params.theta_100pct.n - params.theta_0pct.n,
        Electrode::Positive => params.theta_0pct.p - params.theta_100pct.p,
    };
    params.electrode_capacity_full(side) * window.abs()
}

/// The seven degradation-tracking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingParameterSet {
    pub eps_s_p: f64,
    pub eps_s_n: f64,
    pub d_s_p: f64,
    pub d_s_n: f64,
    pub k_p: f64,
    pub k_n: f64,
    pub r0: f64,
}

impl AgingParameterSet {
    pub const NAMES: [&'static str; 7] = ["eps_s_p", "eps_s_n", "d_s_p", "d_s_n", "k_p", "k_n", "r0"];

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.eps_s_p,
            self.eps_s_n,
            self.d_s_p,
            self.d_s_n,
            self.k_p,
            self.k_n,
            self.r0,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            eps_s_p: a[0],
            eps_s_n: a[1],
            d_s_p: a[2],
            d_s_n: a[3],
            k_p: a[4],
            k_n: a[5],
            r0: a[6],
        }
    }

    pub fn ones() -> Self {
        Self::from_array([1.0; 7])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("aging parameter {name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("eps_s_p", self.eps_s_p), ("eps_s_n", self.eps_s_n)] {
            if v >= 1.0 {
                return Err(Error::invalid(format!("{name} must be below 1, got {v}")));
            }
        }
        Ok(())
    }

    /// Component-wise product.
    pub fn scaled(&self, factors: &[f64; 7]) -> Self {
        let mut a = self.to_array();
        for (x, f) in a.iter_mut().zip(factors) {
            *x *= f;
        }
        Self::from_array(a)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterFile {
    electrode_thickness_n: f64,
    electrode_thickness_sep: f64,
    electrode_thickness_p: f64,
    plate_area: f64,
    particle_radius_n: f64,
    particle_radius_p: f64,
    electrolyte_vol_frac_n: f64,
    electrolyte_vol_frac_sep: f64,
    electrolyte_vol_frac_p: f64,
    active_vol_frac_n: f64,
    active_vol_frac_p: f64,
    c_max_n: f64,
    c_max_p: f64,
    theta_0pct_n: f64,
    theta_0pct_p: f64,
    theta_100pct_n: f64,
    theta_100pct_p: f64,
    electrolyte_conductivity: f64,
    ohmic_resistance: f64,
    c_e_init: f64,
    d_e: f64,
    d_s_n: f64,
    d_s_p: f64,
    k_rate_n: f64,
    k_rate_p: f64,
    #[serde(default = "default_transference")]
    transference_number: f64,
    #[serde(default = "default_temperature")]
    temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ocp_n: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ocp_p: Option<String>,
}

fn default_transference() -> f64 {
    0.363
}

fn default_temperature() -> f64 {
    298.15
}

impl ParameterFile {
    fn into_params(self, ocp: PerElectrode<OcpTable>) -> CellParameters {
        CellParameters {
            electrode_thickness: Layers {
                n: self.electrode_thickness_n,
                sep: self.electrode_thickness_sep,
                p: self.electrode_thickness_p,
            },
            plate_area: self.plate_area,
            particle_radius: PerElectrode::new(self.particle_radius_n, self.particle_radius_p),
            electrolyte_vol_frac: Layers {
                n: self.electrolyte_vol_frac_n,
                sep: self.electrolyte_vol_frac_sep,
                p: self.electrolyte_vol_frac_p,
            },
            active_vol_frac: PerElectrode::new(self.active_vol_frac_n, self.active_vol_frac_p),
            c_max: PerElectrode::new(self.c_max_n, self.c_max_p),
            theta_0pct: PerElectrode::new(self.theta_0pct_n, self.theta_0pct_p),
            theta_100pct: PerElectrode::new(self.theta_100pct_n, self.theta_100pct_p),
            electrolyte_conductivity: self.electrolyte_conductivity,
            ohmic_resistance: self.ohmic_resistance,
            c_e_init: self.c_e_init,
            d_e: self.d_e,
            d_s: PerElectrode::new(self.d_s_n, self.d_s_p),
            k_rate: PerElectrode::new(self.k_rate_n, self.k_rate_p),
            transference_number: self.transference_number,
            temperature: self.temperature,
            ocp,
        }
    }

    fn from_params(p: &CellParameters, ocp_n: Option<&str>, ocp_p: Option<&str>) -> Self {
        Self {
            electrode_thickness_n: p.electrode_thickness.n,
            electrode_thickness_sep: p.electrode_thickness.sep,
            electrode_thickness_p: p.electrode_thickness.p,
            plate_area: p.plate_area,
            particle_radius_n: p.particle_radius.n,
            particle_radius_p: p.particle_radius.p,
            electrolyte_vol_frac_n: p.electrolyte_vol_frac.n,
            electrolyte_vol_frac_sep: p.electrolyte_vol_frac.sep,
            electrolyte_vol_frac_p: p.electrolyte_vol_frac.p,
            active_vol_frac_n: p.active_vol_frac.n,
            active_vol_frac_p: p.active_vol_frac.p,
            c_max_n: p.c_max.n,
            c_max_p: p.c_max.p,
            theta_0pct_n: p.theta_0pct.n,
            theta_0pct_p: p.theta_0pct.p,
            theta_100pct_n: p.theta_100pct.n,
            theta_100pct_p: p.theta_100pct.p,
            electrolyte_conductivity: p.electrolyte_conductivity,
            ohmic_resistance: p.ohmic_resistance,
            c_e_init: p.c_e_init,
            d_e: p.d_e,
            d_s_n: p.d_s.n,
            d_s_p: p.d_s.p,
            k_rate_n: p.k_rate.n,
            k_rate_p: p.k_rate.p,
            transference_number: p.transference_number,
            temperature: p.temperature,
            ocp_n: ocp_n.map(str::to_owned),
            ocp_p: ocp_p.map(str::to_owned),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_capacities_by_hand() {
        // A·F·L·ε·|Δθ|·c_max / 3600, evaluated term by term.
        let p = CellParameters::reference();
        let cathode = 0.0802 * FARADAY * 8.5e-5 * 0.6053 * (0.9377 - 0.2717) * 44871.0 / 3600.0;
        let anode = 0.0802 * FARADAY * 7.5e-5 * 0.4882 * (0.7174 - 0.0214) * 58114.0 / 3600.0;
        assert!((p.capacity(Electrode::Positive) - cathode).abs() < 1e-12);
        assert!((p.capacity(Electrode::Negative) - anode).abs() < 1e-12);
        assert!((cathode - 3.305).abs() < 0.005, "{cathode}");
        assert!((anode - 3.183).abs() < 0.005, "{anode}");
    }

    #[test]
    fn zero_window_has_zero_capacity() {
        let mut p = CellParameters::reference();
        p.theta_100pct.p = p.theta_0pct.p;
        assert_eq!(p.capacity(Electrode::Positive), 0.0);
    }

    #[test]
    fn reference_set_warns_about_mismatch_only() {
        let warnings = CellParameters::reference().validate().unwrap();
        // 3.305 vs 3.183 Ah is a 3.7% gap, inside the 5% default.
        assert!(warnings.is_empty(), "{warnings:?}");
        let mut p = CellParameters::reference();
        p.active_vol_frac.n = 0.42;
        assert_eq!(p.validate().unwrap().len(), 1);
    }

    #[test]
    fn rejects_invalid_windows() {
        let mut p = CellParameters::reference();
        p.theta_100pct.n = 0.01;
        assert!(p.validate().is_err());
        let mut p = CellParameters::reference();
        p.electrolyte_vol_frac.sep = 1.2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn aging_overlay_round_trips() {
        let p = CellParameters::reference();
        let a = p.aging().scaled(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 2.0]);
        let q = p.with_aging(&a);
        assert_eq!(q.aging(), a);
        assert_eq!(q.ohmic_resistance, 2.0 * p.ohmic_resistance);
    }

    #[test]
    fn parameter_file_round_trip() {
        let p = CellParameters::reference();
        let text = p.to_toml(None, None);
        let back = CellParameters::from_toml(&text, None).unwrap();
        assert_eq!(p, back);
        assert!(CellParameters::from_toml("plate_area = 1.0", None).is_err());
    }
}
