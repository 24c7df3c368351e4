//! Tabulated open-circuit potential curves.
//!
//! A table maps electrode stoichiometry to equilibrium potential vs Li/Li+.
//! Evaluation interpolates linearly and clamps outside the tabulated range.
//! The on-disk form is a two-column CSV with a mandatory header line:
//!
//! ```text
//! theta,potential_V
//! 0.000,4.693757
//! 0.005,4.689695
//! ```

use std::path::Path;

use crate::error::{Error, Result};

const MIN_POINTS: usize = 20;

const REFERENCE_NEGATIVE: &str = include_str!("../../data/ocp_negative.csv");
const REFERENCE_POSITIVE: &str = include_str!("../../data/ocp_positive.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct OcpTable {
    theta: Vec<f64>,
    potential: Vec<f64>,
    /// `(first theta, spacing)` when the grid is uniform, enabling O(1) lookup.
    uniform: Option<(f64, f64)>,
}

impl OcpTable {
    pub fn new(theta: Vec<f64>, potential: Vec<f64>) -> Result<Self> {
        if theta.len() != potential.len() {
            return Err(Error::format("OCP table", "column lengths differ"));
        }
        if theta.len() < MIN_POINTS {
            return Err(Error::format(
                "OCP table",
                format!("{} points, need at least {MIN_POINTS}", theta.len()),
            ));
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::format("OCP table", "theta must be strictly increasing"));
        }
        if theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::format("OCP table", "theta outside [0, 1]"));
        }
        if potential.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::format("OCP table", "potential must be finite and positive"));
        }
        let step = (theta[theta.len() - 1] - theta[0]) / (theta.len() - 1) as f64;
        let uniform = theta
            .iter()
            .enumerate()
            .all(|(i, t)| (t - (theta[0] + i as f64 * step)).abs() < 1e-9)
            .then_some((theta[0], step));
        Ok(Self {
            theta,
            potential,
            uniform,
        })
    }

    /// Parses the `theta,potential_V` CSV form.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::format("OCP table", "empty file"))?;
        let cols: Vec<_> = header.split(',').map(str::trim).collect();
        if cols.len() != 2 || cols[0] != "theta" {
            return Err(Error::format(
                "OCP table",
                format!("expected header `theta,potential_V`, got `{header}`"),
            ));
        }
        let mut theta = Vec::new();
        let mut potential = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let mut parts = line.split(',').map(str::trim);
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.parse().ok()).ok_or_else(|| {
                    Error::format("OCP table", format!("bad row {}: `{line}`", lineno + 2))
                })
            };
            theta.push(parse(parts.next())?);
            potential.push(parse(parts.next())?);
        }
        Self::new(theta, potential)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,potential_V\n");
        for (t, v) in self.theta.iter().zip(&self.potential) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }

    /// Reference graphite negative-electrode curve shipped with the crate.
    pub fn reference_negative() -> Self {
        Self::parse_csv(REFERENCE_NEGATIVE).expect("bundled negative OCP table is valid")
    }

    /// Reference layered-oxide positive-electrode curve shipped with the crate.
    pub fn reference_positive() -> Self {
        Self::parse_csv(REFERENCE_POSITIVE).expect("bundled positive OCP table is valid")
    }

    pub fn theta_range(&self) -> (f64, f64) {
        (self.theta[0], self.theta[self.theta.len() - 1])
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.theta.iter().copied().zip(self.potential.iter().copied())
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let n = self.theta.len();
        if theta <= self.theta[0] {
            return self.potential[0];
        }
        if theta >= self.theta[n - 1] {
            return self.potential[n - 1];
        }
        let i = match self.uniform {
            Some((t0, h)) => (((theta - t0) / h) as usize).min(n - 2),
            None => self.theta.partition_point(|t| *t <= theta) - 1,
        };
        let (t0, t1) = (self.theta[i], self.theta[i + 1]);
        let w = (theta - t0) / (t1 - t0);
        self.potential[i] + w * (self.potential[i + 1] - self.potential[i])
    }
}
