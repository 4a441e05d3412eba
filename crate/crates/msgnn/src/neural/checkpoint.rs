//! Checkpoint serialization: model parameters, optimizer moments and the
//! step counter in one little-endian binary file.
//!
//! Layout: magic "MSCK", version u32, tensor count u32, then per tensor
//! name length u16 + UTF-8 name, rank u8, dims u64 each, f64 values.
//! Optimizer moments follow the parameters under names suffixed ".m"/".v",
//! and the file ends with the step counter u64.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::neural::adam::AdamState;
use crate::neural::params::ParamSet;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_tensor<W: Write>(w: &mut W, name: &str, shape: &[usize], values: &[f64], path: &str) -> Result<()> {
    let io = |e| Error::io(path, e);
    let bytes = name.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::Contract(format!("tensor name too long: {name}")));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes()).map_err(io)?;
    w.write_all(bytes).map_err(io)?;
    w.write_all(&[shape.len() as u8]).map_err(io)?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

/// Serialize parameters and (optionally) Adam state.
pub fn write_checkpoint<W: Write>(w: &mut W, params: &ParamSet, adam: Option<&AdamState>) -> Result<()> {
    let path = "<checkpoint>";
    let io = |e| Error::io(path, e);
    let count = params.len() * if adam.is_some() { 3 } else { 1 };
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(count as u32).to_le_bytes()).map_err(io)?;
    for t in params.iter() {
        write_tensor(w, &t.name, &t.shape, &t.values, path)?;
    }
    if let Some(state) = adam {
        for (idx, t) in params.iter().enumerate() {
            write_tensor(w, &format!("{}.m", t.name), &t.shape, &state.m[idx], path)?;
        }
        for (idx, t) in params.iter().enumerate() {
            write_tensor(w, &format!("{}.v", t.name), &t.shape, &state.v[idx], path)?;
        }
    }
    let step = adam.map_or(0, |s| s.step);
    w.write_all(&step.to_le_bytes()).map_err(io)?;
    Ok(())
}

struct RawTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn read_tensor<R: Read>(r: &mut R, path: &str) -> Result<RawTensor> {
    let mut len2 = [0u8; 2];
    r.read_exact(&mut len2)
        .map_err(|_| Error::format(path, "truncated tensor name length"))?;
    let name_len = u16::from_le_bytes(len2) as usize;
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes)
        .map_err(|_| Error::format(path, "truncated tensor name"))?;
    let name = String::from_utf8(name_bytes).map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
    let mut rank = [0u8; 1];
    r.read_exact(&mut rank).map_err(|_| Error::format(path, "truncated rank"))?;
    let rank = rank[0] as usize;
    if rank > 8 {
        return Err(Error::format(path, format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut total: usize = 1;
    for _ in 0..rank {
        let mut d = [0u8; 8];
        r.read_exact(&mut d).map_err(|_| Error::format(path, "truncated dims"))?;
        let dim = u64::from_le_bytes(d);
        if dim == 0 || dim > (1 << 32) {
            return Err(Error::format(path, format!("implausible dimension {dim}")));
        }
        shape.push(dim as usize);
        total = total
            .checked_mul(dim as usize)
            .ok_or_else(|| Error::format(path, "tensor size overflow"))?;
        if total > (1 << 34) {
            return Err(Error::format(path, "tensor too large"));
        }
    }
    let mut bytes = vec![0u8; total * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::format(path, format!("truncated values of {name}")))?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawTensor { name, shape, values })
}

/// Contents of a checkpoint file before binding to a model.
pub struct Checkpoint {
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
    pub step: u64,
}

pub fn read_checkpoint<R: Read>(r: &mut R, path: &str) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::format(path, "truncated magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected MSCK")));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4).map_err(|_| Error::format(path, "truncated version"))?;
    let version = u32::from_le_bytes(v4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let mut c4 = [0u8; 4];
    r.read_exact(&mut c4).map_err(|_| Error::format(path, "truncated count"))?;
    let count = u32::from_le_bytes(c4) as usize;
    if count > 1 << 20 {
        return Err(Error::format(path, format!("implausible tensor count {count}")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let t = read_tensor(r, path)?;
        tensors.push((t.name, t.shape, t.values));
    }
    let mut s8 = [0u8; 8];
    r.read_exact(&mut s8).map_err(|_| Error::format(path, "truncated step counter"))?;
    Ok(Checkpoint { tensors, step: u64::from_le_bytes(s8) })
}

impl Checkpoint {
    /// Load values into an existing parameter set (and Adam state when the
    /// checkpoint carries moments). Every parameter must be present with a
    /// matching shape, and the checkpoint must not carry unknown tensors.
    pub fn load_into(&self, params: &mut ParamSet, adam: Option<&mut AdamState>, path: &str) -> Result<()> {
        use std::collections::HashMap;
        let mut by_name: HashMap<&str, usize> = HashMap::new();
        for (i, (name, _, _)) in self.tensors.iter().enumerate() {
            by_name.insert(name.as_str(), i);
        }
        let has_moments = self.tensors.iter().any(|(n, _, _)| n.ends_with(".m"));
        let expected = params.len() * if has_moments { 3 } else { 1 };
        if self.tensors.len() != expected {
            return Err(Error::format(
                path,
                format!(
                    "checkpoint carries {} tensors but the model expects {expected}",
                    self.tensors.len()
                ),
            ));
        }
        for idx in 0..params.len() {
            let tensor = params.tensor_mut(idx);
            let &ti = by_name
                .get(tensor.name.as_str())
                .ok_or_else(|| Error::format(path, format!("missing parameter {}", tensor.name)))?;
            let (_, shape, values) = &self.tensors[ti];
            if *shape != tensor.shape {
                return Err(Error::format(
                    path,
                    format!("parameter {} shape {shape:?} vs model {:?}", tensor.name, tensor.shape),
                ));
            }
            tensor.values.copy_from_slice(values);
        }
        if let Some(state) = adam {
            if !has_moments {
                return Err(Error::format(path, "checkpoint carries no optimizer moments"));
            }
            for idx in 0..params.len() {
                let name = params.tensor(idx).name.clone();
                for (suffix, store) in [(".m", &mut state.m), (".v", &mut state.v)] {
                    let key = format!("{name}{suffix}");
                    let &ti = by_name
                        .get(key.as_str())
                        .ok_or_else(|| Error::format(path, format!("missing moments {key}")))?;
                    let (_, _, values) = &self.tensors[ti];
                    if values.len() != store[idx].len() {
                        return Err(Error::format(path, format!("moment size mismatch for {key}")));
                    }
                    store[idx].copy_from_slice(values);
                }
            }
            state.step = self.step;
        }
        Ok(())
    }
}
