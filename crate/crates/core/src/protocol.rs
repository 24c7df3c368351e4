//! Charge and discharge programs and the setpoint controller that runs them.
//!
//! A [`Protocol`] is a list of constant-current [`Stage`]s plus the voltage
//! ceiling and cutoff current. During a charge, reaching `v_max` inside any
//! stage switches to a constant-voltage hold at `v_max`. The hold lasts until
//! the stage's SOC break (then the next, lower rate resumes) or, in the last
//! stage, until the current decays to `i_cutoff`.
//!
//! # Protocol file
//!
//! ```toml
//! v_max = 4.2
//! i_cutoff = 0.16
//! stages = [
//!   { c_rate = 2.0, soc = 0.6 },
//!   { c_rate = 1.5, soc = 0.8 },
//!   { c_rate = 1.0, voltage = 4.2 },
//!   { c_rate = 0.5, voltage = 4.2 },
//! ]
//! ```
//!
//! Each stage carries exactly one of `soc`, `voltage` or `time` (seconds).
//! Named presets: `cccv-1c`, `cccv-1.5c`, `cccv-2c`, `mscc-paper`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cell::NOMINAL_CAPACITY_AH;
use crate::error::{Error, Result};

pub const DEFAULT_V_MAX: f64 = 4.2;
pub const DEFAULT_I_CUTOFF: f64 = 0.16;
pub const V_FLOOR: f64 = 2.5;
/// Simulated-time backstop for any program, seconds.
pub const DEFAULT_TIME_LIMIT: f64 = 4.0 * 3600.0;
/// Largest setpoint magnitude, in C.
pub const MAX_C_RATE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndCondition {
    SocReaches(f64),
    VoltageReaches(f64),
    Time(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub c_rate: f64,
    pub end: EndCondition,
}

impl Stage {
    pub fn current(&self) -> f64 {
        self.c_rate * NOMINAL_CAPACITY_AH
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    CvCutoff,
    VoltageFloor,
    TimeLimit,
}

/// Which SOC the stage breaks compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocReference {
    /// Coulomb-counted SOC over the cell's own (aged) stoichiometric window.
    #[default]
    Aged,
    /// Stored charge over the nominal 3.35 Ah.
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub stages: Vec<Stage>,
    pub v_max: f64,
    pub i_cutoff: f64,
    pub terminal: Terminal,
    pub time_limit: f64,
    pub soc_reference: SocReference,
}

impl Protocol {
    pub fn new(stages: Vec<Stage>, v_max: f64, i_cutoff: f64, terminal: Terminal) -> Result<Self> {
        let p = Self {
            stages,
            v_max,
            i_cutoff,
            terminal,
            time_limit: DEFAULT_TIME_LIMIT,
            soc_reference: SocReference::Aged,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_soc_reference(mut self, r: SocReference) -> Self {
        self.soc_reference = r;
        self
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Result<Self> {
        if !(seconds > 0.0) {
            return Err(Error::invalid("time limit must be positive"));
        }
        self.time_limit = seconds;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("protocol needs at least one stage"));
        }
        if !(self.v_max > 3.0 && self.v_max <= 4.3) {
            return Err(Error::invalid(format!("v_max {} outside (3.0, 4.3]", self.v_max)));
        }
        if !(self.i_cutoff > 0.0) {
            return Err(Error::invalid("i_cutoff must be positive"));
        }
        let mut last_soc = f64::NEG_INFINITY;
        let mut last_charge_rate = f64::INFINITY;
        for (k, s) in self.stages.iter().enumerate() {
            if !s.c_rate.is_finite() || s.c_rate.abs() > MAX_C_RATE {
                return Err(Error::invalid(format!("stage {k}: c_rate {} outside the ±{MAX_C_RATE}C guard", s.c_rate)));
            }
            match s.end {
                EndCondition::Time(t) => {
                    if !(t > 0.0) {
                        return Err(Error::invalid(format!("stage {k}: duration must be positive")));
                    }
                }
                _ if s.c_rate == 0.0 => {
                    return Err(Error::invalid(format!("stage {k}: zero current is only allowed for timed stages")));
                }
                EndCondition::SocReaches(b) => {
                    if !(b > 0.0 && b < 1.0) || s.c_rate < 0.0 {
                        return Err(Error::invalid(format!("stage {k}: SOC break {b} must be a charging break in (0, 1)")));
                    }
                    if b <= last_soc {
                        return Err(Error::invalid("SOC breaks must be strictly increasing"));
                    }
                    last_soc = b;
                }
                EndCondition::VoltageReaches(v) => {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::invalid(format!("stage {k}: bad voltage threshold {v}")));
                    }
                }
            }
            if s.c_rate > 0.0 && !matches!(s.end, EndCondition::Time(_)) {
                if s.c_rate > last_charge_rate {
                    return Err(Error::invalid("charging rates must be non-increasing across stages"));
                }
                last_charge_rate = s.c_rate;
            }
        }
        Ok(())
    }

    pub fn is_charge(&self) -> bool {
        self.stages.iter().any(|s| s.c_rate > 0.0) && self.stages.iter().all(|s| s.c_rate >= 0.0)
    }

    /// Named presets accepted on the command line.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "cccv-1c" => make_cccv(1.0, DEFAULT_V_MAX, DEFAULT_I_CUTOFF),
            "cccv-1.5c" => make_cccv(1.5, DEFAULT_V_MAX, DEFAULT_I_CUTOFF),
            "cccv-2c" => make_cccv(2.0, DEFAULT_V_MAX, DEFAULT_I_CUTOFF),
            "mscc-paper" | "mscc" => mscc_default(),
            _ => Err(Error::invalid(format!(
                "unknown protocol preset `{name}` (expected cccv-1c, cccv-1.5c, cccv-2c or mscc-paper)"
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ProtocolFile = toml::from_str(text).map_err(|e| Error::format("protocol file", e.to_string()))?;
        let mut stages = Vec::with_capacity(file.stages.len());
        for (k, s) in file.stages.into_iter().enumerate() {
            let end = match (s.soc, s.voltage, s.time) {
                (Some(b), None, None) => EndCondition::SocReaches(b),
                (None, Some(v), None) => EndCondition::VoltageReaches(v),
                (None, None, Some(t)) => EndCondition::Time(t),
                _ => {
                    return Err(Error::format(
                        "protocol file",
                        format!("stage {k} needs exactly one of soc, voltage, time"),
                    ))
                }
            };
            stages.push(Stage { c_rate: s.c_rate, end });
        }
        let terminal = match file.terminal {
            Some(t) => t,
            None if stages.iter().all(|s| s.c_rate <= 0.0) => Terminal::VoltageFloor,
            None => Terminal::CvCutoff,
        };
        let mut p = Protocol::new(
            stages,
            file.v_max.unwrap_or(DEFAULT_V_MAX),
            file.i_cutoff.unwrap_or(DEFAULT_I_CUTOFF),
            terminal,
        )?;
        if let Some(t) = file.time_limit {
            p = p.with_time_limit(t)?;
        }
        if let Some(r) = file.soc_reference {
            p.soc_reference = r;
        }
        Ok(p)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

impl FromStr for Protocol {
    type Err = Error;

    /// A preset name or a path to a protocol file.
    fn from_str(s: &str) -> Result<Self> {
        Protocol::preset(s).or_else(|e| {
            let path = Path::new(s);
            if path.exists() {
                Protocol::from_path(path)
            } else {
                Err(e)
            }
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolFile {
    stages: Vec<StageFile>,
    v_max: Option<f64>,
    i_cutoff: Option<f64>,
    terminal: Option<Terminal>,
    time_limit: Option<f64>,
    soc_reference: Option<SocReference>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageFile {
    c_rate: f64,
    soc: Option<f64>,
    voltage: Option<f64>,
    time: Option<f64>,
}

/// Single constant-current stage to `v_max`, then a CV hold to `i_cutoff`.
pub fn make_cccv(c_rate: f64, v_max: f64, i_cutoff: f64) -> Result<Protocol> {
    if !(c_rate > 0.0) {
        return Err(Error::invalid("CCCV rate must be positive"));
    }
    if i_cutoff >= c_rate * NOMINAL_CAPACITY_AH {
        return Err(Error::invalid(format!(
            "cutoff {i_cutoff} A is not below the CC current {:.3} A",
            c_rate * NOMINAL_CAPACITY_AH
        )));
    }
    Protocol::new(
        vec![Stage {
            c_rate,
            end: EndCondition::VoltageReaches(v_max),
        }],
        v_max,
        i_cutoff,
        Terminal::CvCutoff,
    )
}

/// Multi-stage constant current: stage `k` ends at `soc_breaks[k]`; stages
/// beyond the breaks end at `v_max`. The last stage is followed by a CV hold.
pub fn make_mscc(stage_rates: &[f64], soc_breaks: &[f64], v_max: f64, i_cutoff: f64) -> Result<Protocol> {
    if stage_rates.is_empty() {
        return Err(Error::invalid("MSCC needs at least one rate"));
    }
    if soc_breaks.len() >= stage_rates.len() {
        return Err(Error::invalid("MSCC needs fewer SOC breaks than stages"));
    }
    if stage_rates.iter().any(|r| !(*r > 0.0)) || stage_rates.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("MSCC rates must be positive and strictly decreasing"));
    }
    if soc_breaks.windows(2).any(|w| w[1] <= w[0]) || soc_breaks.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
        return Err(Error::invalid("MSCC SOC breaks must be strictly increasing in (0, 1)"));
    }
    let last = stage_rates[stage_rates.len() - 1];
    if i_cutoff >= last * NOMINAL_CAPACITY_AH {
        return Err(Error::invalid("cutoff current is not below the final CC current"));
    }
    let stages = stage_rates
        .iter()
        .enumerate()
        .map(|(k, &c_rate)| Stage {
            c_rate,
            end: match soc_breaks.get(k) {
                Some(&b) => EndCondition::SocReaches(b),
                None => EndCondition::VoltageReaches(v_max),
            },
        })
        .collect();
    Protocol::new(stages, v_max, i_cutoff, Terminal::CvCutoff)
}

/// 2C to 60% SOC, 1.5C to 80%, 1C to 4.2 V, 0.5C to 4.2 V, CV to 0.16 A.
pub fn mscc_default() -> Result<Protocol> {
    make_mscc(&[2.0, 1.5, 1.0, 0.5], &[0.6, 0.8], DEFAULT_V_MAX, DEFAULT_I_CUTOFF)
}

/// Constant-current discharge to `v_floor`.
pub fn make_discharge(c_rate: f64, v_floor: f64) -> Result<Protocol> {
    if !(c_rate > 0.0) {
        return Err(Error::invalid("discharge rate must be given as a positive magnitude"));
    }
    Protocol::new(
        vec![Stage {
            c_rate: -c_rate,
            end: EndCondition::VoltageReaches(v_floor),
        }],
        DEFAULT_V_MAX,
        DEFAULT_I_CUTOFF,
        Terminal::VoltageFloor,
    )
}

/// Piecewise-constant current replay; `(c_rate, seconds)` per segment.
/// Voltage limits still apply: the replay stops at `v_max` or the 2.5 V floor.
pub fn make_replay(segments: &[(f64, f64)]) -> Result<Protocol> {
    let stages = segments
        .iter()
        .map(|&(c_rate, secs)| Stage {
            c_rate,
            end: EndCondition::Time(secs),
        })
        .collect();
    Protocol::new(stages, DEFAULT_V_MAX, DEFAULT_I_CUTOFF, Terminal::TimeLimit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlMode {
    Cc(f64),
    Cv(f64),
    Done,
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlMode::Cc(i) => write!(f, "CC({i:.3} A)"),
            ControlMode::Cv(v) => write!(f, "CV({v:.3} V)"),
            ControlMode::Done => f.write_str("Done"),
        }
    }
}

/// What the controller sees after each simulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub soc: f64,
    pub voltage: f64,
    pub current: f64,
    pub time: f64,
}

/// Live controller state. Cheap to copy; one per simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub mode: ControlMode,
    pub stage_index: usize,
    stage_start: f64,
}

impl Controller {
    pub fn start(protocol: &Protocol) -> Self {
        Self {
            mode: ControlMode::Cc(protocol.stages[0].current()),
            stage_index: 0,
            stage_start: 0.0,
        }
    }

    /// Advances to the next stage, or finishes after the last one.
    fn advance(&mut self, protocol: &Protocol, obs: &Observation, from_cv: bool) -> ControlMode {
        let next = self.stage_index + 1;
        if next >= protocol.stages.len() {
            self.mode = ControlMode::Done;
            return self.mode;
        }
        self.stage_index = next;
        self.stage_start = obs.time;
        let stage = protocol.stages[next];
        // Leaving a CV hold for a rate the hold current is already below
        // would push the voltage over the ceiling; keep holding instead.
        self.mode = if from_cv && stage.current() >= obs.current {
            ControlMode::Cv(protocol.v_max)
        } else {
            ControlMode::Cc(stage.current())
        };
        self.mode
    }

    pub fn next(&mut self, protocol: &Protocol, obs: &Observation) -> ControlMode {
        if self.mode == ControlMode::Done {
            return ControlMode::Done;
        }
        if obs.time >= protocol.time_limit {
            self.mode = ControlMode::Done;
            return self.mode;
        }
        let stage = protocol.stages[self.stage_index];
        let last = self.stage_index + 1 == protocol.stages.len();
        let elapsed = obs.time - self.stage_start;

        match self.mode {
            ControlMode::Cv(_) => {
                if obs.current <= protocol.i_cutoff {
                    self.mode = ControlMode::Done;
                    return self.mode;
                }
                match stage.end {
                    EndCondition::SocReaches(b) if obs.soc >= b => self.advance(protocol, obs, true),
                    EndCondition::Time(t) if elapsed >= t => self.advance(protocol, obs, true),
                    _ => self.mode,
                }
            }
            ControlMode::Cc(current) => {
                if current < 0.0 {
                    return self.next_discharge(protocol, obs, stage, elapsed);
                }
                match stage.end {
                    EndCondition::SocReaches(b) if obs.soc >= b => return self.advance(protocol, obs, false),
                    EndCondition::Time(t) if elapsed >= t => return self.advance(protocol, obs, false),
                    EndCondition::VoltageReaches(v) if v < protocol.v_max && obs.voltage >= v => {
                        return self.advance(protocol, obs, false)
                    }
                    _ => {}
                }
                if current > 0.0 && obs.voltage >= protocol.v_max {
                    let hold = last || matches!(stage.end, EndCondition::SocReaches(_));
                    if hold {
                        self.mode = ControlMode::Cv(protocol.v_max);
                    } else if matches!(stage.end, EndCondition::Time(_)) {
                        // A replay cannot hold a voltage it was not asked to.
                        self.mode = ControlMode::Done;
                    } else {
                        self.advance(protocol, obs, false);
                    }
                }
                self.mode
            }
            ControlMode::Done => ControlMode::Done,
        }
    }

    fn next_discharge(&mut self, protocol: &Protocol, obs: &Observation, stage: Stage, elapsed: f64) -> ControlMode {
        if obs.voltage <= V_FLOOR {
            self.mode = ControlMode::Done;
            return self.mode;
        }
        match stage.end {
            EndCondition::VoltageReaches(v) if obs.voltage <= v => self.advance(protocol, obs, false),
            EndCondition::Time(t) if elapsed >= t => self.advance(protocol, obs, false),
            _ => self.mode,
        }
    }
}

/// Stateless form of [`Controller::next`]: the caller carries the mode and
/// stage index between calls. `stage_start` is the time the stage began.
pub fn controller_next(
    protocol: &Protocol,
    mode: ControlMode,
    stage_index: usize,
    stage_start: f64,
    obs: &Observation,
) -> (ControlMode, usize, f64) {
    let mut c = Controller {
        mode,
        stage_index,
        stage_start,
    };
    let m = c.next(protocol, obs);
    (m, c.stage_index, c.stage_start)
}
