use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{hex, SegmentRecord, SourceId};
use crate::error::{Error, Result};
use crate::net::{metrics_from, EpochStats, Metrics};

use super::config::Scenario;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub config_digest: String,
    pub version: String,
    pub stages: Vec<StageRecord>,
    pub real_segments: Vec<SourceId>,
}

/// Per-cycle SOH in percent: truth and the mean estimate of the cycle's
/// evaluation segments before and after transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCurve {
    pub cell: u32,
    pub cycles: Vec<u32>,
    pub true_soh: Vec<f64>,
    pub before_soh: Vec<f64>,
    pub after_soh: Vec<f64>,
}

/// Signed SOH error counts, percentage points. Out-of-range errors land in
/// the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub before: Vec<usize>,
    pub after: Vec<usize>,
}

impl Histogram {
    fn new(before: &[f64], after: &[f64]) -> Self {
        let edges: Vec<f64> = (0..=20).map(|k| -5.0 + 0.5 * k as f64).collect();
        let count = |errs: &[f64]| {
            let mut c = vec![0; edges.len() - 1];
            for &e in errs {
                let k = ((e + 5.0) / 0.5).floor().clamp(0.0, (c.len() - 1) as f64) as usize;
                c[k] += 1;
            }
            c
        };
        Self {
            before: count(before),
            after: count(after),
            edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub before: Metrics,
    pub after: Metrics,
    pub transfer_history: Vec<EpochStats>,
    pub curves: Vec<CellCurve>,
    pub histogram: Histogram,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("report", e.to_string()))
    }

    /// Relative drop of the cell's mean absolute error, (before − after) / before.
    pub fn reduction(&self, cell: u32) -> Option<f64> {
        let find = |m: &Metrics| m.per_cell.iter().find(|c| c.cell == cell).map(|c| c.mae_soh_pct);
        let (b, a) = (find(&self.before)?, find(&self.after)?);
        (b > 0.0).then(|| (b - a) / b)
    }
}

/// Assembles a report from evaluation predictions. Provenance is left for
/// the caller.
pub fn build_report(
    scenario: &Scenario,
    eval: &[SegmentRecord],
    before: &[f64],
    after: &[f64],
    nominal_ah: f64,
    transfer_history: Vec<EpochStats>,
) -> ExperimentReport {
    let labels: Vec<f64> = eval.iter().map(|r| r.label_capacity).collect();
    let cells: Vec<u32> = eval.iter().map(|r| r.source.cell).collect();
    let pct = |q: f64| 100.0 * q / nominal_ah;
    // (cell, cycle) -> (label, Σ before, Σ after, n)
    let mut acc: BTreeMap<(u32, u32), (f64, f64, f64, usize)> = BTreeMap::new();
    for (k, r) in eval.iter().enumerate() {
        let e = acc.entry((r.source.cell, r.source.cycle)).or_insert((r.label_capacity, 0.0, 0.0, 0));
        e.1 += before[k];
        e.2 += after[k];
        e.3 += 1;
    }
    let mut curves: Vec<CellCurve> = Vec::new();
    for ((cell, cycle), (label, b, a, n)) in acc {
        if curves.last().is_none_or(|c| c.cell != cell) {
            curves.push(CellCurve {
                cell,
                cycles: Vec::new(),
                true_soh: Vec::new(),
                before_soh: Vec::new(),
                after_soh: Vec::new(),
            });
        }
        let c = curves.last_mut().expect("pushed above");
        c.cycles.push(cycle);
        c.true_soh.push(pct(label));
        c.before_soh.push(pct(b / n as f64));
        c.after_soh.push(pct(a / n as f64));
    }
    let err = |p: &[f64]| -> Vec<f64> { p.iter().zip(&labels).map(|(p, l)| pct(p - l)).collect() };
    ExperimentReport {
        scenario: scenario.clone(),
        before: metrics_from(before, &labels, &cells, nominal_ah),
        after: metrics_from(after, &labels, &cells, nominal_ah),
        transfer_history,
        curves,
        histogram: Histogram::new(&err(before), &err(after)),
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").into(),
            ..Provenance::default()
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl Format {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            _ => Err(Error::Validation(format!("unknown report format `{name}` (json, csv, svg)"))),
        }
    }
}

fn write(path: PathBuf, text: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Writes the report into `dir`:
/// json → `report.json`; csv → `metrics.csv`, `curves.csv`;
/// svg → `cell-<id>.svg` per target cell plus `histogram.svg`.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for f in formats {
        match f {
            Format::Json => write(dir.join("report.json"), &report.to_json(), &mut out)?,
            Format::Csv => {
                write(dir.join("metrics.csv"), &metrics_csv(report), &mut out)?;
                write(dir.join("curves.csv"), &curves_csv(report), &mut out)?;
            }
            Format::Svg => {
                for c in &report.curves {
                    write(dir.join(format!("cell-{}.svg", c.cell)), &curve_svg(c), &mut out)?;
                }
                write(dir.join("histogram.svg"), &histogram_svg(&report.histogram), &mut out)?;
            }
        }
    }
    Ok(out)
}

fn metrics_csv(r: &ExperimentReport) -> String {
    let mut s = String::from("cell,n,mae_before_pct,mae_after_pct,rmse_before_ah,rmse_after_ah\n");
    for (b, a) in r.before.per_cell.iter().zip(&r.after.per_cell) {
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4},{:.5},{:.5}",
            b.cell, b.n, b.mae_soh_pct, a.mae_soh_pct, b.rmse_ah, a.rmse_ah
        );
    }
    let _ = writeln!(
        s,
        "all,{},{:.4},{:.4},{:.5},{:.5}",
        r.before.n, r.before.mae_soh_pct, r.after.mae_soh_pct, r.before.rmse_ah, r.after.rmse_ah
    );
    s
}

fn curves_csv(r: &ExperimentReport) -> String {
    let mut s = String::from("cell,cycle,true_soh_pct,before_soh_pct,after_soh_pct\n");
    for c in &r.curves {
        for k in 0..c.cycles.len() {
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.4}",
                c.cell, c.cycles[k], c.true_soh[k], c.before_soh[k], c.after_soh[k]
            );
        }
    }
    s
}

/// One row per report, zero rows for an empty sweep.
pub fn sweep_summary_csv(reports: &[ExperimentReport]) -> String {
    let mut s = String::from("scenario,segments,epochs,n_eval,mae_before_pct,mae_after_pct,within_2pct_after,cell_mae_after_pct\n");
    for r in reports {
        let epochs = r.transfer_history.len();
        let cells: Vec<String> = r.after.per_cell.iter().map(|c| format!("{}:{:.4}", c.cell, c.mae_soh_pct)).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{:.4},{:.4},{:.4},{}",
            r.scenario.id,
            r.scenario.segments,
            epochs,
            r.after.n,
            r.before.mae_soh_pct,
            r.after.mae_soh_pct,
            r.after.within_2pct,
            cells.join(";")
        );
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        M + (x - self.x.0) / (self.x.1 - self.x.0).max(1e-12) * (W - 2.0 * M)
    }

    fn py(&self, y: f64) -> f64 {
        H - M - (y - self.y.0) / (self.y.1 - self.y.0).max(1e-12) * (H - 2.0 * M)
    }

    fn path(&self, xs: &[f64], ys: &[f64]) -> String {
        let pts: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        pts.join(" ")
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            s,
            r#"<rect x="{M}" y="{M}" width="{:.0}" height="{:.0}" fill="none" stroke="black"/>"#,
            W - 2.0 * M,
            H - 2.0 * M
        );
        for k in 0..=4 {
            let fx = self.x.0 + (self.x.1 - self.x.0) * k as f64 / 4.0;
            let fy = self.y.0 + (self.y.1 - self.y.0) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.0}" font-size="11" text-anchor="middle">{fx:.1}</text>"#,
                self.px(fx),
                H - M + 16.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.0}" y="{:.2}" font-size="11" text-anchor="end">{fy:.1}</text>"#,
                M - 4.0,
                self.py(fy) + 4.0
            );
        }
        let _ = writeln!(s, r#"<text x="{:.0}" y="{:.0}" font-size="12" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 10.0);
        let _ = writeln!(
            s,
            r#"<text x="14" y="{:.0}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.0})">{ylabel}</text>"#,
            H / 2.0,
            H / 2.0
        );
    }
}

fn svg_open() -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#) + "\n"
}

/// Capacity against cycle with a ±2% band around the truth.
fn curve_svg(c: &CellCurve) -> String {
    let xs: Vec<f64> = c.cycles.iter().map(|&v| v as f64).collect();
    let all = c.true_soh.iter().chain(&c.before_soh).chain(&c.after_soh);
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    lo = (lo - 3.0).floor();
    hi = (hi + 3.0).ceil();
    let f = Frame {
        x: (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0)),
        y: (lo, hi),
    };
    let mut s = svg_open();
    let upper: Vec<f64> = c.true_soh.iter().map(|v| v + 2.0).collect();
    let lower: Vec<f64> = c.true_soh.iter().rev().map(|v| v - 2.0).collect();
    let xr: Vec<f64> = xs.iter().rev().copied().collect();
    let _ = writeln!(
        s,
        r##"<polygon points="{} {}" fill="#dddddd" stroke="none"/>"##,
        f.path(&xs, &upper),
        f.path(&xr, &lower)
    );
    let line = |s: &mut String, ys: &[f64], style: &str| {
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" {style}/>"#, f.path(&xs, ys));
    };
    line(&mut s, &c.true_soh, r#"stroke="black" stroke-width="2""#);
    line(&mut s, &c.before_soh, r##"stroke="#d95f02" stroke-dasharray="5,3""##);
    line(&mut s, &c.after_soh, r##"stroke="#1b6ac9""##);
    f.axes(&mut s, "cycle", "SOH (%)");
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="30" font-size="13" text-anchor="middle">cell {}: truth, pre-trained (dashed), transferred</text>"#,
        W / 2.0,
        c.cell
    );
    s.push_str("</svg>\n");
    s
}

fn histogram_svg(h: &Histogram) -> String {
    let top = h.before.iter().chain(&h.after).copied().max().unwrap_or(0).max(1) as f64;
    let f = Frame {
        x: (h.edges[0], h.edges[h.edges.len() - 1]),
        y: (0.0, top),
    };
    let mut s = svg_open();
    for (k, (&b, &a)) in h.before.iter().zip(&h.after).enumerate() {
        let (x0, x1) = (f.px(h.edges[k]), f.px(h.edges[k + 1]));
        let w = (x1 - x0) / 2.0;
        for (j, (n, color)) in [(b, "#d95f02"), (a, "#1b6ac9")].into_iter().enumerate() {
            let y = f.py(n as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{y:.2}" width="{w:.2}" height="{:.2}" fill="{color}"/>"#,
                x0 + j as f64 * w,
                f.py(0.0) - y
            );
        }
    }
    f.axes(&mut s, "SOH error (percentage points)", "segments");
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="30" font-size="13" text-anchor="middle">error histogram: pre-trained, transferred</text>"#,
        W / 2.0
    );
    s.push_str("</svg>\n");
    s
}
