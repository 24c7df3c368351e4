//! Parameter identification: stoichiometric windows from OCV data, full
//! pristine parameter sets from multi-rate curves, and per-cycle aging
//! parameters.
//!
//! Cycle curves are replayed rather than re-simulated: constant-current
//! samples feed the measured current into the candidate model and compare
//! voltages, constant-voltage samples let the candidate regulate the
//! measured voltage and compare currents (1 A counts as 10 mV).
//!
//! # Measured-curve file
//!
//! ```text
//! t_s,current_A,voltage_V
//! 0,3.35,3.512
//! 1,3.35,3.519
//! ```
//!
//! Rows are uniformly spaced in time; current is positive on charge.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::apso::{optimize, ApsoConfig, ApsoResult};
use crate::cell::{
    AgingParameterSet, CellModel, CellParameters, Electrode, OcpTable, PerElectrode, SimConfig, SimTrace,
    NOMINAL_CAPACITY_AH,
};
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 50;
/// Current residual weight, mV per A.
pub const CURRENT_WEIGHT_MV_PER_A: f64 = 10.0;
pub const STOICHIOMETRY_LIMIT_MV: f64 = 20.0;
pub const PRISTINE_LIMIT_MV: f64 = 25.0;
pub const AGING_LIMIT_MV: f64 = 25.0;
/// Samples within this distance of the regulated voltage count as CV.
pub const CV_BAND: f64 = 1e-3;
/// Fitness charged for a candidate that cannot finish the replay, mV.
const FAILURE_PENALTY_MV: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Ocv,
    CycleVoltage,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub c_rate: Option<f64>,
    pub cycle: Option<u32>,
    pub cell_id: Option<String>,
    /// SOC at the first sample of a cycle curve.
    pub soc0: f64,
    /// Voltage the CV phase regulates to.
    pub v_cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCurve {
    pub kind: CurveKind,
    /// SOC for OCV curves, seconds for cycle curves.
    pub x: Vec<f64>,
    pub voltage: Vec<f64>,
    /// Amperes, charge positive. Empty for OCV curves.
    pub current: Vec<f64>,
    pub meta: CurveMeta,
}

impl MeasuredCurve {
    pub fn ocv(soc: Vec<f64>, voltage: Vec<f64>) -> Result<Self> {
        let c = Self {
            kind: CurveKind::Ocv,
            x: soc,
            voltage,
            current: Vec::new(),
            meta: CurveMeta::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn cycle(t: Vec<f64>, current: Vec<f64>, voltage: Vec<f64>, meta: CurveMeta) -> Result<Self> {
        let c = Self {
            kind: CurveKind::CycleVoltage,
            x: t,
            voltage,
            current,
            meta,
        };
        c.validate()?;
        Ok(c)
    }

    /// Cycle curve from a simulated trace, keeping every `stride`-th sample.
    pub fn from_trace(trace: &SimTrace, stride: usize, meta: CurveMeta) -> Result<Self> {
        if stride != 1 {
            return Err(Error::invalid(
                "decimated traces cannot be replayed; resample the current instead",
            ));
        }
        let s = &trace.samples;
        let meta = CurveMeta {
            soc0: s.first().map_or(0.0, |x| x.soc),
            ..meta
        };
        Self::cycle(
            s.iter().map(|x| x.t).collect(),
            s.iter().map(|x| x.current).collect(),
            s.iter().map(|x| x.voltage).collect(),
            meta,
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.voltage.len() {
            return Err(Error::invalid("curve columns differ in length"));
        }
        if self.kind == CurveKind::CycleVoltage && self.current.len() != self.x.len() {
            return Err(Error::invalid("cycle curve needs one current per sample"));
        }
        if self.x.len() < MIN_SAMPLES {
            return Err(Error::invalid(format!(
                "curve has {} samples, identification needs at least {MIN_SAMPLES}",
                self.x.len()
            )));
        }
        if self.x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("curve abscissa must be strictly increasing"));
        }
        if self.voltage.iter().chain(&self.current).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measured curve"));
        }
        Ok(())
    }

    /// Sample spacing of a cycle curve; errors unless uniform.
    pub fn time_step(&self) -> Result<f64> {
        let dt = self.x[1] - self.x[0];
        if self
            .x
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0))
        {
            return Err(Error::invalid("cycle curve must be uniformly sampled in time"));
        }
        Ok(dt)
    }

    pub fn parse_csv(text: &str, meta: CurveMeta) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::format("measured curve", "empty file"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "t_s" || cols[1] != "current_A" || cols[2] != "voltage_V" {
            return Err(Error::format(
                "measured curve",
                format!("expected header `t_s,current_A,voltage_V`, got `{header}`"),
            ));
        }
        let (mut t, mut i, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .take(3)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format("measured curve", format!("bad row {}: `{line}`", n + 2)))?;
            if vals.len() < 3 {
                return Err(Error::format("measured curve", format!("short row {}", n + 2)));
            }
            t.push(vals[0]);
            i.push(vals[1]);
            v.push(vals[2]);
        }
        Self::cycle(t, i, v, meta)
    }

    pub fn from_path(path: &Path, meta: CurveMeta) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, meta)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,current_A,voltage_V\n");
        for k in 0..self.len() {
            let i = self.current.get(k).copied().unwrap_or(0.0);
            let _ = writeln!(out, "{},{},{}", self.x[k], i, self.voltage[k]);
        }
        out
    }
}

impl Default for CurveMetaBuilder {
    fn default() -> Self {
        Self(CurveMeta {
            v_cv: 4.2,
            ..CurveMeta::default()
        })
    }
}

/// Convenience for building curve metadata with the usual 4.2 V CV level.
pub struct CurveMetaBuilder(CurveMeta);

impl CurveMetaBuilder {
    pub fn rate(mut self, c_rate: f64) -> Self {
        self.0.c_rate = Some(c_rate);
        self
    }

    pub fn cycle(mut self, cycle: u32) -> Self {
        self.0.cycle = Some(cycle);
        self
    }

    pub fn cell(mut self, id: impl Into<String>) -> Self {
        self.0.cell_id = Some(id.into());
        self
    }

    pub fn soc0(mut self, soc0: f64) -> Self {
        self.0.soc0 = soc0;
        self
    }

    pub fn build(self) -> CurveMeta {
        self.0
    }
}

impl CurveMeta {
    pub fn builder() -> CurveMetaBuilder {
        CurveMetaBuilder::default()
    }
}

/// Voltage RMSE of a replay in mV, with CV samples scored on current.
pub fn replay_rmse_mv(model: &CellModel, curve: &MeasuredCurve) -> f64 {
    match replay_residuals(model, curve) {
        Ok(sq) => (sq / curve.len() as f64).sqrt(),
        Err(done) => FAILURE_PENALTY_MV * (2.0 - done),
    }
}

/// Sum of squared residuals in mV². On failure returns the fraction of the
/// curve completed.
fn replay_residuals(model: &CellModel, curve: &MeasuredCurve) -> std::result::Result<f64, f64> {
    let n = curve.len();
    let mut state = model.init_state(curve.meta.soc0.clamp(0.0, 1.0)).map_err(|_| 0.0)?;
    let v0 = model
        .terminal_voltage(&state, curve.current[0])
        .map_err(|_| 0.0)?;
    let mut sq = (1e3 * (v0 - curve.voltage[0])).powi(2);
    for k in 1..n {
        let fail = |_| k as f64 / n as f64;
        let v_meas = curve.voltage[k];
        let i_meas = curve.current[k];
        let cv = i_meas > 0.0 && (v_meas - curve.meta.v_cv).abs() <= CV_BAND && k > 1 && i_meas < curve.current[k - 1];
        if cv {
            let i = model.solve_cv_step_current(&state, v_meas).map_err(fail)?;
            model.step(&mut state, i).map_err(fail)?;
            sq += (CURRENT_WEIGHT_MV_PER_A * (i - i_meas)).powi(2);
        } else {
            let out = model.step(&mut state, i_meas).map_err(fail)?;
            sq += (1e3 * (out.voltage - v_meas)).powi(2);
        }
    }
    Ok(sq)
}

/// Identified stoichiometric windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoichiometryFit {
    pub theta_0pct: PerElectrode<f64>,
    pub theta_100pct: PerElectrode<f64>,
    pub rmse_mv: f64,
}

impl StoichiometryFit {
    /// Applies the windows to `params` and reports both electrode window capacities (Ah).
    pub fn apply(&self, params: &CellParameters) -> (CellParameters, PerElectrode<f64>) {
        let mut p = params.clone();
        p.theta_0pct = self.theta_0pct;
        p.theta_100pct = self.theta_100pct;
        let caps = PerElectrode::new(p.capacity(Electrode::Negative), p.capacity(Electrode::Positive));
        (p, caps)
    }
}

fn ocv_model(x: &[f64], soc: f64, ocp_p: &OcpTable, ocp_n: &OcpTable) -> f64 {
    // x = [θp0, θp100, θn0, θn100]
    let tp = x[0] - soc * (x[0] - x[1]);
    let tn = x[2] + soc * (x[3] - x[2]);
    ocp_p.eval(tp) - ocp_n.eval(tn)
}

/// Fits the four stoichiometric boundaries to an OCV-vs-SOC curve.
pub fn fit_stoichiometry(
    curve: &MeasuredCurve,
    ocp_p: &OcpTable,
    ocp_n: &OcpTable,
    apso: &ApsoConfig,
) -> Result<StoichiometryFit> {
    if curve.kind != CurveKind::Ocv {
        return Err(Error::invalid("stoichiometry fitting needs an OCV curve"));
    }
    curve.validate()?;
    let objective = |x: &[f64]| {
        let violation = (x[1] - x[0]).max(0.0) + (x[2] - x[3]).max(0.0);
        if violation > 0.0 {
            return 1e4 * (1.0 + violation);
        }
        let sq: f64 = curve
            .x
            .iter()
            .zip(&curve.voltage)
            .map(|(&s, &v)| (ocv_model(x, s, ocp_p, ocp_n) - v).powi(2))
            .sum();
        1e3 * (sq / curve.len() as f64).sqrt()
    };
    let mut config = apso.clone();
    config.bounds = vec![(0.0, 1.0); 4];
    let r = optimize(objective, &config)?;
    if r.best_fitness > STOICHIOMETRY_LIMIT_MV {
        return Err(Error::NonConvergence {
            rmse_mv: r.best_fitness,
            limit_mv: STOICHIOMETRY_LIMIT_MV,
        });
    }
    let x = r.best_position;
    Ok(StoichiometryFit {
        theta_0pct: PerElectrode::new(x[2], x[0]),
        theta_100pct: PerElectrode::new(x[3], x[1]),
        rmse_mv: r.best_fitness,
    })
}

/// How a search dimension maps from the unit interval to a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchDim {
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl SearchDim {
    pub fn map(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => self.lo + u * (self.hi - self.lo),
            Scale::Log => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp(),
        }
    }
}

/// Parameters identified for a pristine cell, in search order.
pub const PRISTINE_NAMES: [&str; 9] = [
    "active_vol_frac_n",
    "active_vol_frac_p",
    "c_max_n",
    "c_max_p",
    "d_s_n",
    "d_s_p",
    "k_rate_n",
    "k_rate_p",
    "ohmic_resistance",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PristineConfig {
    pub apso: ApsoConfig,
    pub sim: SimConfig,
    /// Search box per parameter as (lower, upper) multiples of the initial guess.
    pub spans: [(f64, f64); 9],
}

impl Default for PristineConfig {
    fn default() -> Self {
        Self {
            apso: ApsoConfig::new(Vec::new()).with_iters(60),
            sim: SimConfig::default(),
            spans: [
                (0.8, 1.2),
                (0.8, 1.2),
                (0.8, 1.2),
                (0.8, 1.2),
                (0.2, 5.0),
                (0.2, 5.0),
                (0.01, 100.0),
                (0.01, 100.0),
                (0.25, 4.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PristineFit {
    pub params: CellParameters,
    pub per_curve_rmse_mv: Vec<f64>,
    pub rmse_mv: f64,
    pub history: Vec<f64>,
}

fn pristine_get(p: &CellParameters) -> [f64; 9] {
    [
        p.active_vol_frac.n,
        p.active_vol_frac.p,
        p.c_max.n,
        p.c_max.p,
        p.d_s.n,
        p.d_s.p,
        p.k_rate.n,
        p.k_rate.p,
        p.ohmic_resistance,
    ]
}

fn pristine_set(p: &mut CellParameters, v: &[f64]) {
    p.active_vol_frac = PerElectrode::new(v[0], v[1]);
    p.c_max = PerElectrode::new(v[2], v[3]);
    p.d_s = PerElectrode::new(v[4], v[5]);
    p.k_rate = PerElectrode::new(v[6], v[7]);
    p.ohmic_resistance = v[8];
}

/// Mean of per-curve replay RMSEs for one parameter set, mV.
pub fn combined_rmse_mv(params: &CellParameters, curves: &[MeasuredCurve], sim: SimConfig) -> Result<Vec<f64>> {
    curves
        .iter()
        .map(|c| {
            let model = CellModel::pristine(params, SimConfig { dt: c.time_step()?, ..sim })?;
            Ok(replay_rmse_mv(&model, c))
        })
        .collect()
}

/// Identifies the nine free pristine parameters from charge curves at two
/// or more rates. `initial` supplies the fixed (measured) parameters and the
/// centre of the search box for the free ones.
pub fn identify_pristine(curves: &[MeasuredCurve], initial: &CellParameters, config: &PristineConfig) -> Result<PristineFit> {
    let mut rates: Vec<f64> = curves.iter().filter_map(|c| c.meta.c_rate).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if rates.len() < 2 {
        return Err(Error::invalid("pristine identification needs curves at two or more rates"));
    }
    for c in curves {
        if c.kind != CurveKind::CycleVoltage {
            return Err(Error::invalid("pristine identification needs cycle curves"));
        }
        c.validate()?;
        c.time_step()?;
    }
    let centre = pristine_get(initial);
    let dims: Vec<SearchDim> = centre
        .iter()
        .zip(&config.spans)
        .enumerate()
        .map(|(i, (&c, &(lo, hi)))| {
            let mut d = SearchDim {
                lo: c * lo,
                hi: c * hi,
                scale: if hi / lo > 4.0 { Scale::Log } else { Scale::Linear },
            };
            if i < 2 {
                d.hi = d.hi.min(0.95);
            }
            d
        })
        .collect();
    let build = |u: &[f64]| {
        let v: Vec<f64> = dims.iter().zip(u).map(|(d, &x)| d.map(x)).collect();
        let mut p = initial.clone();
        pristine_set(&mut p, &v);
        p
    };
    let objective = |u: &[f64]| {
        let p = build(u);
        match combined_rmse_mv(&p, curves, config.sim) {
            Ok(r) => r.iter().sum::<f64>() / r.len() as f64,
            Err(_) => 2.0 * FAILURE_PENALTY_MV,
        }
    };
    let mut apso = config.apso.clone();
    apso.bounds = vec![(0.0, 1.0); 9];
    let r = optimize(objective, &apso)?;
    let params = build(&r.best_position);
    let per_curve = combined_rmse_mv(&params, curves, config.sim)?;
    let rmse = per_curve.iter().sum::<f64>() / per_curve.len() as f64;
    if rmse > PRISTINE_LIMIT_MV {
        return Err(Error::NonConvergence {
            rmse_mv: rmse,
            limit_mv: PRISTINE_LIMIT_MV,
        });
    }
    Ok(PristineFit {
        params,
        per_curve_rmse_mv: per_curve,
        rmse_mv: rmse,
        history: r.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingFitConfig {
    pub apso: ApsoConfig,
    pub sim: SimConfig,
    /// Which of the seven aging parameters are searched; the rest stay at
    /// the warm start. Order as [`AgingParameterSet::NAMES`].
    pub free: [bool; 7],
    /// Search box as warm start × [1 − span, 1 + span].
    pub span: f64,
}

impl Default for AgingFitConfig {
    fn default() -> Self {
        Self {
            apso: ApsoConfig::new(Vec::new()).with_iters(60),
            sim: SimConfig::default(),
            free: [true; 7],
            span: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingFit {
    pub aging: AgingParameterSet,
    pub rmse_mv: f64,
    pub history: Vec<f64>,
}

/// Identifies the aging parameters of one cycle from its curve(s), searching
/// `warm_start × [1 − span, 1 + span]`.
pub fn identify_aging(
    curves: &[MeasuredCurve],
    base: &CellParameters,
    warm_start: &AgingParameterSet,
    config: &AgingFitConfig,
) -> Result<AgingFit> {
    if curves.is_empty() {
        return Err(Error::invalid("aging identification needs at least one curve"));
    }
    for c in curves {
        if c.kind != CurveKind::CycleVoltage {
            return Err(Error::invalid("aging identification needs cycle curves"));
        }
        c.validate()?;
        c.time_step()?;
    }
    warm_start.validate()?;
    if !(config.span > 0.0 && config.span < 1.0) {
        return Err(Error::invalid("aging search span must lie in (0, 1)"));
    }
    let free: Vec<usize> = (0..7).filter(|&i| config.free[i]).collect();
    if free.is_empty() {
        return Err(Error::invalid("no free aging parameters"));
    }
    let warm = warm_start.to_array();
    let build = |u: &[f64]| {
        let mut a = warm;
        for (&i, &x) in free.iter().zip(u) {
            a[i] = warm[i] * (1.0 - config.span + 2.0 * config.span * x);
        }
        AgingParameterSet::from_array(a)
    };
    let models = |a: &AgingParameterSet| -> Result<Vec<CellModel>> {
        curves
            .iter()
            .map(|c| CellModel::new(base, a, SimConfig { dt: c.time_step()?, ..config.sim }))
            .collect()
    };
    let score = |a: &AgingParameterSet| -> f64 {
        match models(a) {
            Ok(ms) => {
                let (sq, n) = ms.iter().zip(curves).fold((0.0, 0usize), |(sq, n), (m, c)| {
                    let r = replay_rmse_mv(m, c);
                    (sq + r * r * c.len() as f64, n + c.len())
                });
                (sq / n as f64).sqrt()
            }
            Err(_) => 2.0 * FAILURE_PENALTY_MV,
        }
    };
    let mut apso = config.apso.clone();
    apso.bounds = vec![(0.0, 1.0); free.len()];
    let ApsoResult {
        best_position,
        history,
        ..
    } = optimize(|u: &[f64]| score(&build(u)), &apso)?;
    let aging = build(&best_position);
    let rmse = score(&aging);
    if rmse > AGING_LIMIT_MV {
        return Err(Error::NonConvergence {
            rmse_mv: rmse,
            limit_mv: AGING_LIMIT_MV,
        });
    }
    Ok(AgingFit {
        aging,
        rmse_mv: rmse,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub cycle: u32,
    pub aging: AgingParameterSet,
    /// Ah.
    pub capacity: f64,
    pub soh: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgingTrajectory {
    pub entries: Vec<TrajectoryEntry>,
}

impl AgingTrajectory {
    pub fn push(&mut self, cycle: u32, aging: AgingParameterSet, capacity: f64) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if cycle <= last.cycle {
                return Err(Error::invalid("trajectory cycles must be strictly increasing"));
            }
        }
        self.entries.push(TrajectoryEntry {
            cycle,
            aging,
            capacity,
            soh: capacity / NOMINAL_CAPACITY_AH,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cycle");
        for n in AgingParameterSet::NAMES {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",capacity_Ah,soh\n");
        for e in &self.entries {
            let _ = write!(out, "{}", e.cycle);
            for v in e.aging.to_array() {
                let _ = write!(out, ",{v:e}");
            }
            let _ = writeln!(out, ",{:.6},{:.6}", e.capacity, e.soh);
        }
        out
    }
}

/// Chains [`identify_aging`] over successive cycles, each warm-started from
/// the previous result. `cycles` pairs a cycle index with its curves.
pub fn identify_trajectory(
    cycles: &[(u32, Vec<MeasuredCurve>)],
    base: &CellParameters,
    initial: &AgingParameterSet,
    config: &AgingFitConfig,
) -> Result<(AgingTrajectory, Vec<f64>)> {
    let mut traj = AgingTrajectory::default();
    let mut rmses = Vec::with_capacity(cycles.len());
    let mut warm = *initial;
    for (cycle, curves) in cycles {
        let fit = identify_aging(curves, base, &warm, config)?;
        let model = CellModel::new(base, &fit.aging, config.sim)?;
        let capacity = crate::cell::reference_capacity(&model)?;
        traj.push(*cycle, fit.aging, capacity)?;
        rmses.push(fit.rmse_mv);
        warm = fit.aging;
    }
    Ok((traj, rmses))
}
