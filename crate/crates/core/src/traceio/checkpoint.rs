//! Tensor container used for model and probe checkpoints: string metadata
//! plus named `f64` tensors, closed by a SHA-256 trailer.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, SstError};
use crate::model::{ModelConfig, SstModel, SstParams};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSTCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| SstError::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| SstError::Format("invalid UTF-8 in checkpoint".into()))
    }
}

impl Container {
    pub fn meta_map(&self) -> BTreeMap<String, String> {
        self.meta.iter().cloned().collect()
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for e in t.shape() {
                out.extend_from_slice(&(*e as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(SstError::Format("not a checkpoint".into()));
        }
        let body = bytes.len() - 32;
        if Sha256::digest(&bytes[..body]).as_slice() != &bytes[body..] {
            return Err(SstError::Format("checkpoint checksum mismatch".into()));
        }
        let mut r = Reader { bytes: &bytes[..body], at: 8 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(SstError::Format(format!("unsupported checkpoint version {version}")));
        }
        let n_meta = r.u32()?;
        let mut meta = Vec::new();
        for _ in 0..n_meta {
            meta.push((r.string()?, r.string()?));
        }
        let n_tensors = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, e| a.checked_mul(*e));
            let numel = numel.ok_or_else(|| SstError::Format("tensor shape overflows".into()))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| SstError::Format("tensor too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.at != body {
            return Err(SstError::Format("trailing bytes in checkpoint".into()));
        }
        Ok(Self { meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Model checkpoint: `kind=model`, the configuration, and every parameter.
pub fn model_container(model: &SstModel) -> Container {
    let mut meta = vec![("kind".to_string(), "model".to_string())];
    meta.extend(model.config.to_pairs());
    let tensors = model.params.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
    Container { meta, tensors }
}

pub fn model_from_container(c: &Container) -> Result<SstModel> {
    if c.get_meta("kind") != Some("model") {
        return Err(SstError::Format("container does not hold a model".into()));
    }
    let pairs: BTreeMap<String, String> = c.meta.iter().filter(|(k, _)| k != "kind").cloned().collect();
    let cfg = ModelConfig::from_pairs(&pairs)?;
    let params = SstParams::from_named(&cfg, c.tensors.clone())?;
    SstModel::new(cfg, params)
}

pub fn save_model(model: &SstModel, path: &Path) -> Result<()> {
    model_container(model).write(path)
}

pub fn load_model(path: &Path) -> Result<SstModel> {
    model_from_container(&Container::read(path)?)
}
