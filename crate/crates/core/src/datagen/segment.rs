use serde::{Deserialize, Serialize};

use crate::cell::{Sample, NOMINAL_CAPACITY_AH};
use crate::error::{Error, Result};

use super::Normalization;

pub const DEFAULT_DELTA_Q: f64 = 1.5;
/// Window stride in Ah. Gives 59 windows on a full default MSCC charge.
pub const DEFAULT_STRIDE_Q: f64 = 0.03;
pub const POINTS: usize = 25;
pub const TENSOR_LEN: usize = 2 * POINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SourceId {
    pub cell: u32,
    pub cycle: u32,
    pub set: u32,
}

/// A fixed-charge window of a charging trace, resampled to 25 points
/// equally spaced in throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub source: SourceId,
    /// Ah into the trace where the window starts.
    pub start_throughput: f64,
    /// (voltage V, current A).
    pub samples: [(f64, f64); POINTS],
    pub label_capacity: f64,
}

impl Segment {
    pub fn label_soh(&self) -> f64 {
        self.label_capacity / NOMINAL_CAPACITY_AH
    }
}

/// Normalized voltage plane then current plane, each 5×5 row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentTensor(pub [f64; TENSOR_LEN]);

fn interp(xs: &[f64], ys: impl Fn(usize) -> f64, x: f64) -> f64 {
    // first index with xs[i] >= x; duplicates resolve to the later sample
    let hi = xs.partition_point(|&v| v < x).min(xs.len() - 1);
    if hi == 0 {
        return ys(0);
    }
    let (x0, x1) = (xs[hi - 1], xs[hi]);
    if x1 <= x0 {
        return ys(hi);
    }
    let w = (x - x0) / (x1 - x0);
    ys(hi - 1) + w * (ys(hi) - ys(hi - 1))
}

/// Slides a `delta_q` window over the charge throughput of `samples` in
/// steps of `stride_q`. Windows that would run past the end are dropped.
pub fn segment_trace(
    samples: &[Sample],
    label_capacity: f64,
    source: SourceId,
    delta_q: f64,
    stride_q: f64,
) -> Vec<Segment> {
    if samples.len() < 2 || !(delta_q > 0.0 && stride_q > 0.0) {
        return Vec::new();
    }
    let q: Vec<f64> = samples.iter().map(|s| s.throughput).collect();
    let total = q[q.len() - 1];
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let start = q[0] + k as f64 * stride_q;
        if start + delta_q > total + 1e-12 {
            break;
        }
        let mut pts = [(0.0, 0.0); POINTS];
        for (j, p) in pts.iter_mut().enumerate() {
            let x = start + delta_q * j as f64 / (POINTS - 1) as f64;
            *p = (
                interp(&q, |i| samples[i].voltage, x),
                interp(&q, |i| samples[i].current, x),
            );
        }
        out.push(Segment {
            source,
            start_throughput: start - q[0],
            samples: pts,
            label_capacity,
        });
        k += 1;
    }
    out
}

pub fn pack_segment(seg: &Segment, norm: &Normalization) -> Result<SegmentTensor> {
    let mut t = [0.0; TENSOR_LEN];
    for (j, &(v, i)) in seg.samples.iter().enumerate() {
        if !(v.is_finite() && i.is_finite()) {
            return Err(Error::NonFinite("segment sample"));
        }
        t[j] = (v - norm.v_lo) / (norm.v_hi - norm.v_lo);
        t[POINTS + j] = i / norm.i_scale;
    }
    Ok(SegmentTensor(t))
}

/// Inverse of [`pack_segment`] on the resampled grid.
pub fn unpack_tensor(t: &SegmentTensor, norm: &Normalization) -> [(f64, f64); POINTS] {
    let mut out = [(0.0, 0.0); POINTS];
    for (j, p) in out.iter_mut().enumerate() {
        *p = (
            norm.v_lo + t.0[j] * (norm.v_hi - norm.v_lo),
            t.0[POINTS + j] * norm.i_scale,
        );
    }
    out
}
