//! Binary checkpoint container, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "BEDXCKPT"
//! version   u32      1
//! n_config  u32      then n_config x (u32 len, key utf-8, u32 len, value utf-8)
//! n_tensors u32      then n_tensors x:
//!           u32 len, name utf-8
//!           u32 rank, rank x u32 dims
//!           prod(dims) x f32
//! ```
//!
//! Config pairs are [`ModelConfig::to_pairs`]; tensors appear in model order.

use std::io::{self, Write};

use super::{Model, ModelConfig, ModelError, Tensor};

pub const MAGIC: &[u8; 8] = b"BEDXCKPT";
pub const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &Model<f32>) -> io::Result<()> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    let pairs = model.config().to_pairs();
    put_u32(&mut w, pairs.len() as u32)?;
    for (k, v) in &pairs {
        put_str(&mut w, k)?;
        put_str(&mut w, v)?;
    }
    put_u32(&mut w, model.params().len() as u32)?;
    for t in model.params() {
        put_str(&mut w, &t.name)?;
        put_u32(&mut w, t.shape.len() as u32)?;
        for &d in &t.shape {
            put_u32(&mut w, d as u32)?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(model: &Model<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model).expect("writing to memory cannot fail");
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Checkpoint(format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ModelError::Checkpoint("string is not utf-8".into()))
    }
}

/// Raw contents of a checkpoint without checking them against a layout.
pub fn parse(bytes: &[u8]) -> Result<(Vec<(String, String)>, Vec<Tensor<f32>>), ModelError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let n_pairs = r.u32()?;
    let mut pairs = Vec::new();
    for _ in 0..n_pairs {
        pairs.push((r.string()?, r.string()?));
    }
    let n_tensors = r.u32()?;
    let mut tensors = Vec::new();
    for _ in 0..n_tensors {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| ModelError::Checkpoint("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.at != bytes.len() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok((pairs, tensors))
}

/// Loads a checkpoint using the config stored in it.
pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>, ModelError> {
    let (pairs, tensors) = parse(bytes)?;
    let config = ModelConfig::from_pairs(&pairs)?;
    Model::from_tensors(&config, tensors)
}

/// Loads a checkpoint that must match `expected`: tensors are compared first
/// (so a shape conflict names the tensor), then the remaining config keys.
pub fn load_expecting(bytes: &[u8], expected: &ModelConfig) -> Result<Model<f32>, ModelError> {
    let (pairs, tensors) = parse(bytes)?;
    let reference = Model::<f32>::new(expected, 0)?;
    for (i, want) in reference.params().iter().enumerate() {
        match tensors.get(i) {
            None => {
                return Err(ModelError::TensorMismatch { name: want.name.clone(), msg: "missing from checkpoint".into() })
            }
            Some(got) if got.name != want.name => {
                return Err(ModelError::TensorMismatch {
                    name: want.name.clone(),
                    msg: format!("checkpoint has {} in its place", got.name),
                })
            }
            Some(got) if got.shape != want.shape => {
                return Err(ModelError::TensorMismatch {
                    name: want.name.clone(),
                    msg: format!("checkpoint shape {:?}, config needs {:?}", got.shape, want.shape),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = tensors.get(reference.params().len()) {
        return Err(ModelError::TensorMismatch { name: extra.name.clone(), msg: "not part of the configured model".into() });
    }
    for (key, value) in expected.to_pairs() {
        let found = pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| v.clone()).unwrap_or_else(|| "<missing>".into());
        if found != value {
            return Err(ModelError::ConfigMismatch { key, expected: value, found });
        }
    }
    Model::from_tensors(expected, tensors)
}
