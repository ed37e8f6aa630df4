//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "MMCCKPT\0"
//! version      u32
//! config       u32 length + UTF-8 `key = value` text (model architecture)
//! meta         u32 length + UTF-8 `key = value` text (run state)
//! array count  u32
//! per array    u32 name length, name, u32 ndim, ndim x u64 dims, f32 data
//! sha256       32 bytes over everything above
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::model::CompletionModel;
use super::{ModelError, Result};
use crate::config::KeyValues;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MMCCKPT\0";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: KeyValues,
    pub meta: KeyValues,
    pub arrays: Vec<(String, Array2<f64>)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| ModelError::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ModelError::Checkpoint("invalid utf-8".into()))
    }
}

fn put_text(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_text(&mut out, &self.config.to_text());
        put_text(&mut out, &self.meta.to_text());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, a) in &self.arrays {
            put_text(&mut out, name);
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(a.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(a.ncols() as u64).to_le_bytes());
            for v in a.iter() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(ModelError::Checkpoint("file too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(ModelError::Checkpoint("content hash mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let parse = |t: String| KeyValues::parse(&t).map_err(|e| ModelError::Checkpoint(e.to_string()));
        let config = parse(r.text()?)?;
        let meta = parse(r.text()?)?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.text()?;
            if r.u32()? != 2 {
                return Err(ModelError::Checkpoint(format!("array {name} is not 2-d")));
            }
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| ModelError::Checkpoint("array too large".into()))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| ModelError::Checkpoint("array too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4")) as f64).collect();
            arrays.push((name, Array2::from_shape_vec((rows, cols), data).expect("sized")));
        }
        if r.pos != body.len() {
            return Err(ModelError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { config, meta, arrays })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        Ok(hex::encode(&bytes[bytes.len() - 32..]))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Content hash stored in a checkpoint file, hex encoded.
    pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
        let bytes = fs::read(path)?;
        if bytes.len() < 32 {
            return Err(ModelError::Checkpoint("file too short".into()));
        }
        Ok(hex::encode(&bytes[bytes.len() - 32..]))
    }

    pub fn array(&self, name: &str) -> Option<&Array2<f64>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig::from_kv(&self.config, &ModelConfig::full())?)
    }
}

impl CompletionModel {
    pub fn to_checkpoint(&self, meta: KeyValues, extra: Vec<(String, Array2<f64>)>) -> Checkpoint {
        let mut config = KeyValues::new();
        self.config.write_kv(&mut config);
        let mut arrays: Vec<(String, Array2<f64>)> = self
            .params
            .ids()
            .map(|id| (self.params.name(id).to_string(), self.params.value(id).clone()))
            .collect();
        arrays.extend(extra);
        Checkpoint { config, meta, arrays }
    }

    /// Rebuilds a model from a checkpoint. With `expected`, refuses a
    /// checkpoint whose architecture differs.
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<&ModelConfig>) -> Result<Self> {
        let config = ck.model_config()?;
        if let Some(exp) = expected {
            if !exp.same_architecture(&config) {
                return Err(ModelError::Checkpoint("model config does not match the checkpoint".into()));
            }
        }
        let mut model = CompletionModel::new(config)?;
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_string();
            let stored = ck.array(&name).ok_or_else(|| ModelError::Checkpoint(format!("missing weight {name}")))?;
            let slot = model.params.value_mut(id);
            if stored.dim() != slot.dim() {
                return Err(ModelError::Checkpoint(format!("weight {name} has shape {:?}, expected {:?}", stored.dim(), slot.dim())));
            }
            slot.assign(stored);
        }
        Ok(model)
    }
}
