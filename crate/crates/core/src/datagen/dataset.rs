//! Segment dataset file.
//!
//! Little-endian layout:
//!
//! ```text
//! "CBSEG1"                      6 bytes
//! schema version                u32
//! record count                  u64
//! v_lo, v_hi, i_scale, nominal  4 × f64
//! records                       count × 228 bytes
//!   cell, cycle, set            3 × u32
//!   start_throughput, capacity  2 × f64
//!   tensor                      50 × f32
//! checksum                      u64, first 8 bytes of SHA-256 over all preceding bytes
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell::NOMINAL_CAPACITY_AH;
use crate::error::{Error, Result};
use crate::protocol::DEFAULT_V_MAX;

use super::segment::{pack_segment, Segment, SegmentTensor, SourceId, TENSOR_LEN};

pub const MAGIC: &[u8; 6] = b"CBSEG1";
pub const SCHEMA_VERSION: u32 = 1;
pub const RECORD_BYTES: usize = 12 + 16 + 4 * TENSOR_LEN;
const HEADER_BYTES: usize = 6 + 4 + 8 + 32;

/// Channel scaling frozen into every dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub v_lo: f64,
    pub v_hi: f64,
    /// Current that maps to 1.0, A.
    pub i_scale: f64,
    pub nominal_ah: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            v_lo: 2.5,
            v_hi: DEFAULT_V_MAX,
            i_scale: 2.0 * NOMINAL_CAPACITY_AH,
            nominal_ah: NOMINAL_CAPACITY_AH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRecord {
    pub source: SourceId,
    pub start_throughput: f64,
    pub label_capacity: f64,
    pub tensor: [f32; TENSOR_LEN],
}

impl SegmentRecord {
    pub fn from_segment(seg: &Segment, norm: &Normalization) -> Result<Self> {
        let t = pack_segment(seg, norm)?;
        let mut tensor = [0f32; TENSOR_LEN];
        for (d, s) in tensor.iter_mut().zip(t.0) {
            *d = s as f32;
        }
        Ok(Self {
            source: seg.source,
            start_throughput: seg.start_throughput,
            label_capacity: seg.label_capacity,
            tensor,
        })
    }

    pub fn tensor_f64(&self) -> SegmentTensor {
        let mut t = [0.0; TENSOR_LEN];
        for (d, s) in t.iter_mut().zip(self.tensor) {
            *d = s as f64;
        }
        SegmentTensor(t)
    }

    pub fn label_soh(&self, norm: &Normalization) -> f64 {
        self.label_capacity / norm.nominal_ah
    }

    fn encode(&self, out: &mut Vec<u8>) {
        for v in [self.source.cell, self.source.cycle, self.source.set] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.start_throughput.to_le_bytes());
        out.extend_from_slice(&self.label_capacity.to_le_bytes());
        for v in self.tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn decode(b: &[u8]) -> Self {
        let u = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let d = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let mut tensor = [0f32; TENSOR_LEN];
        for (k, t) in tensor.iter_mut().enumerate() {
            let i = 28 + 4 * k;
            *t = f32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        }
        Self {
            source: SourceId {
                cell: u(0),
                cycle: u(4),
                set: u(8),
            },
            start_throughput: d(12),
            label_capacity: d(20),
            tensor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub norm: Normalization,
    pub records: Vec<SegmentRecord>,
}

impl Dataset {
    pub fn new(norm: Normalization) -> Self {
        Self {
            norm,
            records: Vec::new(),
        }
    }

    pub fn from_segments(segments: &[Segment], norm: Normalization) -> Result<Self> {
        let records = segments
            .iter()
            .map(|s| SegmentRecord::from_segment(s, &norm))
            .collect::<Result<_>>()?;
        Ok(Self { norm, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.records.len() * RECORD_BYTES + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for v in [self.norm.v_lo, self.norm.v_hi, self.norm.i_scale, self.norm.nominal_ah] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in &self.records {
            r.encode(&mut out);
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Hex SHA-256 of the serialized file.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..6] != MAGIC {
            return Err(Error::format("dataset", "missing CBSEG1 magic"));
        }
        if bytes.len() < HEADER_BYTES + 8 {
            return Err(Error::Checksum(origin.to_path_buf()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if checksum(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::Checksum(origin.to_path_buf()));
        }
        let version = u32::from_le_bytes(body[6..10].try_into().unwrap());
        if version != SCHEMA_VERSION {
            return Err(Error::format("dataset", format!("unsupported schema version {version}")));
        }
        let count = u64::from_le_bytes(body[10..18].try_into().unwrap()) as usize;
        let d = |i: usize| f64::from_le_bytes(body[i..i + 8].try_into().unwrap());
        let norm = Normalization {
            v_lo: d(18),
            v_hi: d(26),
            i_scale: d(34),
            nominal_ah: d(42),
        };
        if body.len() != HEADER_BYTES + count * RECORD_BYTES {
            return Err(Error::format("dataset", "record count disagrees with file length"));
        }
        let records = body[HEADER_BYTES..]
            .chunks_exact(RECORD_BYTES)
            .map(SegmentRecord::decode)
            .collect();
        Ok(Self { norm, records })
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let h = Sha256::digest(bytes);
    u64::from_le_bytes(h[..8].try_into().unwrap())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&dataset.to_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: u32) -> SegmentRecord {
        let mut tensor = [0f32; TENSOR_LEN];
        for (i, t) in tensor.iter_mut().enumerate() {
            *t = (k as f32 + 1.0) / (i as f32 + 3.0);
        }
        SegmentRecord {
            source: SourceId { cell: k, cycle: 2 * k, set: 7 },
            start_throughput: 0.03 * k as f64,
            label_capacity: 3.0 - 1e-4 * k as f64,
            tensor,
        }
    }

    #[test]
    fn record_size() {
        assert_eq!(RECORD_BYTES, 228);
        let mut b = Vec::new();
        record(1).encode(&mut b);
        assert_eq!(b.len(), RECORD_BYTES);
    }

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let ds = Dataset {
            norm: Normalization::default(),
            records: (0..1000).map(record).collect(),
        };
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Checksum(_))));
    }

    #[test]
    fn empty_dataset_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        write_dataset(&Dataset::default(), &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, HEADER_BYTES + 8);
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let ds = Dataset {
            norm: Normalization::default(),
            records: vec![record(3)],
        };
        let mut b = ds.to_bytes();
        b[70] ^= 1;
        assert!(matches!(Dataset::from_bytes(&b, Path::new("x")), Err(Error::Checksum(_))));
    }
}
