//! Weights file.
//!
//! ```text
//! "SOHNET"          6 bytes
//! version           u32
//! manifest length   u32, then UTF-8 JSON: spec, label affine, tensor names and shapes
//! parameters        f32 × n_params, layer order
//! buffers           f32 × n_buffers (batch-norm running mean, variance)
//! checksum          u64, first 8 bytes of SHA-256 over all preceding bytes
//! ```
//! All integers and floats little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::float::Float;
use super::model::{Network, NetworkSpec};

pub const WEIGHTS_MAGIC: &[u8; 6] = b"SOHNET";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// "param" or "buffer".
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    spec: NetworkSpec,
    label_offset: f64,
    label_scale: f64,
    n_params: usize,
    n_buffers: usize,
    tensors: Vec<TensorInfo>,
}

impl<T: Float> Network<T> {
    /// Tensor names and shapes in file order.
    pub fn manifest(&self) -> Vec<TensorInfo> {
        let t = |name: String, shape: Vec<usize>, kind: &str| TensorInfo {
            name,
            shape,
            kind: kind.into(),
        };
        let mut out = Vec::new();
        for (i, b) in self.layout.blocks.iter().enumerate() {
            for (j, (c, bn)) in b.convs.iter().zip(&b.bns).enumerate() {
                out.push(t(format!("block{i}.conv{j}.kernel"), vec![c.kh, c.kw, c.cin, c.cout], "param"));
                out.push(t(format!("block{i}.bn{j}.scale"), vec![bn.c], "param"));
                out.push(t(format!("block{i}.bn{j}.offset"), vec![bn.c], "param"));
            }
            if let Some(p) = &b.proj {
                out.push(t(format!("block{i}.proj.kernel"), vec![1, 1, p.cin, p.cout], "param"));
            }
        }
        let (f1, f2) = (&self.layout.fc1, &self.layout.fc2);
        out.push(t("fc1.weight".into(), vec![f1.fan_in, f1.out], "param"));
        out.push(t("fc1.bias".into(), vec![f1.out], "param"));
        out.push(t("fc2.weight".into(), vec![f2.fan_in, f2.out], "param"));
        out.push(t("fc2.bias".into(), vec![f2.out], "param"));
        for (i, b) in self.layout.blocks.iter().enumerate() {
            for (j, bn) in b.bns.iter().enumerate() {
                out.push(t(format!("block{i}.bn{j}.running_mean"), vec![bn.c], "buffer"));
                out.push(t(format!("block{i}.bn{j}.running_var"), vec![bn.c], "buffer"));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            spec: self.spec.clone(),
            label_offset: self.label_offset,
            label_scale: self.label_scale,
            n_params: self.params.len(),
            n_buffers: self.buffers.len(),
            tensors: self.manifest(),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for x in self.params.iter().chain(&self.buffers) {
            out.extend_from_slice(&(x.to_f64() as f32).to_le_bytes());
        }
        let sum = Sha256::digest(&out);
        out.extend_from_slice(&sum[..8]);
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < 14 || &bytes[..6] != WEIGHTS_MAGIC {
            return Err(Error::format("weights", "missing SOHNET magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if Sha256::digest(body)[..8] != *tail {
            return Err(Error::Checksum(origin.to_path_buf()));
        }
        let version = u32::from_le_bytes(body[6..10].try_into().unwrap());
        if version != WEIGHTS_VERSION {
            return Err(Error::format("weights", format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(body[10..14].try_into().unwrap()) as usize;
        let json = body
            .get(14..14 + len)
            .ok_or_else(|| Error::format("weights", "manifest runs past end of file"))?;
        let m: Manifest = serde_json::from_slice(json).map_err(|e| Error::format("weights manifest", e.to_string()))?;
        let mut net = Network::<T>::new(m.spec, 0)?;
        if net.params.len() != m.n_params || net.buffers.len() != m.n_buffers {
            return Err(Error::ShapeMismatch("weights manifest disagrees with its network spec".into()));
        }
        let data = &body[14 + len..];
        if data.len() != 4 * (m.n_params + m.n_buffers) {
            return Err(Error::format("weights", "tensor data has the wrong length"));
        }
        let mut vals = data
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64));
        for x in net.params.iter_mut().chain(net.buffers.iter_mut()) {
            *x = vals.next().expect("length checked");
        }
        net.label_offset = m.label_offset;
        net.label_scale = m.label_scale;
        net.validate()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
