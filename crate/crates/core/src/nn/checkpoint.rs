//! Binary checkpoint format:
//!
//! ```text
//! "SPNER1"
//! repeated: name_len u64 | name utf-8 | rank u64 | dims u64 * rank | data f32 * numel
//! count u64
//! ```
//!
//! All integers and floats are little-endian. The store seed travels as a
//! record named `@seed` holding four 16-bit limbs, which `f32` represents
//! exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{ParamStore, Scalar, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"SPNER1";
const SEED_RECORD: &str = "@seed";

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: impl Iterator<Item = f32>) {
    put_u64(out, name.len() as u64);
    out.extend_from_slice(name.as_bytes());
    put_u64(out, shape.len() as u64);
    for &d in shape {
        put_u64(out, d as u64);
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a store. Values are written as `f32`.
pub fn save_checkpoint<T: Scalar>(store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + store.num_parameters() * 4 + 64 * store.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let seed = store.seed();
    let limbs = (0..4).map(|i| ((seed >> (16 * i)) & 0xffff) as f32);
    put_record(&mut out, SEED_RECORD, &[4], limbs);
    for (name, t) in store.iter() {
        put_record(&mut out, name, &t.shape, t.data.iter().map(|v| v.as_f64() as f32));
    }
    put_u64(&mut out, store.len() as u64 + 1);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.end - self.pos < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size does not fit in memory".into()))
    }
}

/// Parses a checkpoint into a fresh store with the tensors in file order.
pub fn load_checkpoint(bytes: &[u8]) -> Result<ParamStore<f32>> {
    if bytes.len() < CHECKPOINT_MAGIC.len() {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (magic, _) = bytes.split_at(CHECKPOINT_MAGIC.len());
    if magic != CHECKPOINT_MAGIC {
        return Err(if magic.starts_with(b"SPNER") {
            Error::Checkpoint(format!("unsupported version `{}`", magic[5] as char))
        } else {
            Error::Checkpoint("not a checkpoint (bad magic)".into())
        });
    }
    if bytes.len() < CHECKPOINT_MAGIC.len() + 8 {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let footer = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));
    let mut r = Reader { bytes, pos: CHECKPOINT_MAGIC.len(), end: bytes.len() - 8 };
    let mut records: Vec<(String, Tensor<f32>)> = Vec::new();
    while r.pos < r.end {
        let name_len = r.usize()?;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .into();
        let rank = r.usize()?;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(r.usize()?);
        }
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        records.push((name, Tensor::from_vec(&shape, data)?));
    }
    if footer != records.len() as u64 {
        return Err(Error::Checkpoint(format!("footer counts {footer} records, found {}", records.len())));
    }
    let mut seed = 0u64;
    let mut store_records = Vec::with_capacity(records.len());
    for (name, t) in records {
        if name == SEED_RECORD {
            if t.data.len() != 4 {
                return Err(Error::Checkpoint("malformed seed record".into()));
            }
            seed = t.data.iter().enumerate().fold(0, |acc, (i, &v)| acc | ((v as u64 & 0xffff) << (16 * i)));
        } else {
            store_records.push((name, t));
        }
    }
    let mut store = ParamStore::new(seed);
    for (name, t) in store_records {
        if store.id(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
        }
        store.insert(name, t);
    }
    Ok(store)
}

impl<T: Scalar> ParamStore<T> {
    /// Overwrites every tensor of `self`, and the seed, from a checkpoint
    /// that must contain exactly the same names and shapes.
    pub fn restore(&mut self, bytes: &[u8]) -> Result<()> {
        let loaded = load_checkpoint(bytes)?;
        let unknown: Vec<&str> = loaded.iter().map(|(n, _)| n).filter(|n| self.id(n).is_none()).collect();
        if !unknown.is_empty() {
            return Err(Error::Checkpoint(format!("unknown tensors: {}", unknown.join(", "))));
        }
        let missing: Vec<&str> = self.iter().map(|(n, _)| n).filter(|n| loaded.id(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!("missing tensors: {}", missing.join(", "))));
        }
        for (name, t) in loaded.iter() {
            let id = self.id(name).expect("checked above");
            if self.get(id).shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape,
                    self.get(id).shape
                )));
            }
        }
        for (name, t) in loaded.iter() {
            let id = self.id(name).expect("checked above");
            let dst = self.get_mut(id);
            for (d, &v) in dst.data.iter_mut().zip(&t.data) {
                *d = T::of(v as f64);
            }
            dst.grad = None;
        }
        self.set_seed(loaded.seed());
        Ok(())
    }
}
