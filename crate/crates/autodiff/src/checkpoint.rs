//! Versioned binary checkpoints.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! "DDGC"                      magic
//! u32                         format version (1)
//! u32 len, [u8; len]          metadata, UTF-8 (JSON by convention)
//! u32                         entry count
//! per entry:
//!   u16 len, [u8; len]        name
//!   u8                        role code (kernel 0, bias 1, bn-gamma 2, bn-beta 3, running mean 4, running var 5)
//!   u8                        precision in bytes (4 = f32, 8 = f64)
//!   u8                        rank, then rank x u32 dimensions
//!   values                    product(dims) little-endian floats
//! u8                          optimizer count
//! per optimizer:
//!   u16 len, [u8; len]        group name
//!   u64                       step
//!   4 x f64                   lr, beta1, beta2, eps
//!   u32                       parameter count
//!   per parameter:            u32 entry index, then m and v at the entry's precision and size
//! ```

use crate::error::{AutodiffError, Result};
use crate::optim::{Adam, AdamConfig, Moments};
use crate::param::{ParamId, ParamStore, Role};
use crate::real::Real;
use crate::tensor::Tensor;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DDGC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub metadata: String,
    pub store: ParamStore<T>,
    pub optimizers: Vec<(String, Adam<T>)>,
}

fn bad(msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Checkpoint(msg.into())
}

pub fn encode<T: Real>(metadata: &str, store: &ParamStore<T>, optimizers: &[(&str, &Adam<T>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(metadata.len() as u32).to_le_bytes());
    out.extend_from_slice(metadata.as_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(bad("parameter name too long"));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(p.role.code());
        out.push(T::BYTES);
        out.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        p.value.data().iter().for_each(|v| v.push_le(&mut out));
    }
    out.push(optimizers.len() as u8);
    for (name, opt) in optimizers {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&opt.step_count().to_le_bytes());
        let c = opt.config;
        for v in [c.lr, c.beta1, c.beta2, c.eps] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(opt.params().len() as u32).to_le_bytes());
        for (id, mom) in opt.params().iter().zip(opt.moments()) {
            out.extend_from_slice(&(id.index() as u32).to_le_bytes());
            mom.m.iter().chain(&mom.v).for_each(|v| v.push_le(&mut out));
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| bad("invalid UTF-8"))
    }

    fn values<T: Real>(&mut self, precision: u8, count: usize) -> Result<Vec<T>> {
        let bytes = self.take(count.checked_mul(precision as usize).ok_or_else(|| bad("size overflow"))?)?;
        Ok(match precision {
            4 => bytes.chunks_exact(4).map(|c| T::lit(f32::from_le(c) as f64)).collect(),
            8 => bytes.chunks_exact(8).map(|c| T::lit(f64::from_le(c))).collect(),
            p => return Err(bad(format!("unknown precision {p}"))),
        })
    }
}

/// Parses a checkpoint, converting values to `T` when the stored precision differs.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let meta_len = r.u32()? as usize;
    let metadata = r.string(meta_len)?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    let mut precisions = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = r.string(name_len)?;
        let role = Role::from_code(r.u8()?).ok_or_else(|| bad("unknown role"))?;
        let precision = r.u8()?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let values = r.values(precision, dims.iter().product())?;
        store.add(name, role, Tensor::new(&dims, values)?)?;
        precisions.push(precision);
    }
    let mut optimizers = Vec::new();
    for _ in 0..r.u8()? {
        let name_len = r.u16()? as usize;
        let name = r.string(name_len)?;
        let step = r.u64()?;
        let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        let mut moments = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = r.u32()? as usize;
            if idx >= count {
                return Err(bad(format!("optimizer references entry {idx}")));
            }
            let len = store.value(ParamId(idx)).len();
            let m = r.values(precisions[idx], len)?;
            let v = r.values(precisions[idx], len)?;
            params.push(ParamId(idx));
            moments.push(Moments { m, v });
        }
        optimizers.push((name, Adam::from_state(config, step, params, moments)?));
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint { metadata, store, optimizers })
}

pub fn save<T: Real>(
    path: &Path,
    metadata: &str,
    store: &ParamStore<T>,
    optimizers: &[(&str, &Adam<T>)],
) -> Result<()> {
    std::fs::write(path, encode(metadata, store, optimizers)?)?;
    Ok(())
}

pub fn load<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    decode(&std::fs::read(path)?)
}

impl<T: Real> ParamStore<T> {
    /// Overwrites values with same-named entries of `other`; every entry must be present with the same shape.
    pub fn copy_values_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        for id in self.ids().collect::<Vec<_>>() {
            let name = self.get(id).name.clone();
            let src = other.value(other.id(&name)?);
            let dst = &mut self.get_mut(id).value;
            if src.shape() != dst.shape() {
                return Err(bad(format!("{name} has shape {:?}, expected {:?}", src.shape(), dst.shape())));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}
